//! Resource sites, search orders and the prefix-cover gathering cost.
//!
//! A site hides between one and three resources in five locations. Checking
//! locations in the order given by a [`SearchOrder`] costs one time unit per
//! location until every resource has been found.

use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Number of locations at every resource site.
pub const LOCATIONS: u8 = 5;

/// Time units available to an agent each day.
pub const DAY_BUDGET: u32 = 50;

/// Index of a site within its [`Environment`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteId(pub u16);

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// Bit set of occupied locations; bit `k - 1` stands for location `k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocationSet(u8);

impl LocationSet {
    pub fn from_locations(locations: &[u8]) -> Result<Self, ConfigError> {
        let mut bits = 0u8;
        for &loc in locations {
            if !(1..=LOCATIONS).contains(&loc) {
                return Err(ConfigError::invalid("site location", format!("{loc} outside 1..=5")));
            }
            let bit = 1 << (loc - 1);
            if bits & bit != 0 {
                return Err(ConfigError::invalid("site location", format!("{loc} repeated")));
            }
            bits |= bit;
        }
        Ok(Self(bits))
    }

    pub fn bits(self) -> u8 {
        self.0
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, loc: u8) -> bool {
        (1..=LOCATIONS).contains(&loc) && self.0 & (1 << (loc - 1)) != 0
    }

    /// Ascending list of locations.
    pub fn to_vec(self) -> Vec<u8> {
        (1..=LOCATIONS).filter(|&l| self.contains(l)).collect()
    }
}

/// One foraging site. Its reward is the number of occupied locations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ResourceSite {
    pub id: SiteId,
    locations: LocationSet,
}

impl ResourceSite {
    /// Builds a site, enforcing 1 to 3 distinct locations in `1..=5`.
    pub fn new(id: SiteId, locations: &[u8]) -> Result<Self, ConfigError> {
        let set = LocationSet::from_locations(locations)?;
        if !(1..=3).contains(&set.len()) {
            return Err(ConfigError::invalid(
                "site reward",
                format!("{} locations, expected 1..=3", set.len()),
            ));
        }
        Ok(Self { id, locations: set })
    }

    pub fn locations(&self) -> LocationSet {
        self.locations
    }

    pub fn reward(&self) -> u32 {
        self.locations.len()
    }
}

/// Order in which an agent checks the five locations of a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u8; 5]", into = "[u8; 5]")]
pub struct SearchOrder([u8; 5]);

impl SearchOrder {
    pub const IDENTITY: SearchOrder = SearchOrder([1, 2, 3, 4, 5]);

    pub fn new(order: [u8; 5]) -> Result<Self, ConfigError> {
        let mut seen = 0u8;
        for &loc in &order {
            if !(1..=LOCATIONS).contains(&loc) || seen & (1 << (loc - 1)) != 0 {
                return Err(ConfigError::invalid(
                    "search order",
                    format!("{order:?} is not a permutation of 1..=5"),
                ));
            }
            seen |= 1 << (loc - 1);
        }
        Ok(Self(order))
    }

    /// Uniformly random permutation.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut order = Self::IDENTITY.0;
        order.shuffle(rng);
        Self(order)
    }

    /// Swaps two distinct uniformly chosen positions.
    pub fn transposed<R: Rng + ?Sized>(self, rng: &mut R) -> Self {
        let i = rng.gen_range(0..5);
        let mut j = rng.gen_range(0..4);
        if j >= i {
            j += 1;
        }
        let mut order = self.0;
        order.swap(i, j);
        Self(order)
    }

    pub fn as_array(&self) -> [u8; 5] {
        self.0
    }

    /// Every one of the 120 permutations, in lexicographic order.
    pub fn all() -> Vec<SearchOrder> {
        let mut out = Vec::with_capacity(120);
        let mut cur = [0u8; 5];
        fn rec(depth: usize, used: u8, cur: &mut [u8; 5], out: &mut Vec<SearchOrder>) {
            if depth == 5 {
                out.push(SearchOrder(*cur));
                return;
            }
            for loc in 1..=LOCATIONS {
                let bit = 1 << (loc - 1);
                if used & bit == 0 {
                    cur[depth] = loc;
                    rec(depth + 1, used | bit, cur, out);
                }
            }
        }
        rec(0, 0, &mut cur, &mut out);
        out
    }
}

impl TryFrom<[u8; 5]> for SearchOrder {
    type Error = ConfigError;

    fn try_from(value: [u8; 5]) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<SearchOrder> for [u8; 5] {
    fn from(value: SearchOrder) -> Self {
        value.0
    }
}

impl fmt::Display for SearchOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for d in self.0 {
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

/// Time units spent checking `site` in `order`: the shortest prefix of the
/// order that covers every occupied location.
pub fn gather_cost(order: SearchOrder, site: &ResourceSite) -> u32 {
    let target = site.locations.bits();
    let mut found = 0u8;
    for (i, &loc) in order.0.iter().enumerate() {
        found |= 1 << (loc - 1);
        if found & target == target {
            return i as u32 + 1;
        }
    }
    // unreachable for a valid permutation
    u32::from(LOCATIONS)
}

/// Best achievable cost at `site`, which always equals its reward.
pub fn optimal_site_cost(site: &ResourceSite) -> u32 {
    site.reward()
}

/// Relative weights for site rewards 1, 2 and 3.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardDistribution {
    pub weights: [f64; 3],
}

impl Default for RewardDistribution {
    fn default() -> Self {
        Self { weights: [1.0, 1.0, 1.0] }
    }
}

impl RewardDistribution {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(ConfigError::invalid("reward_weights", "weights must be finite and non-negative"));
        }
        if self.weights.iter().sum::<f64>() <= 0.0 {
            return Err(ConfigError::invalid("reward_weights", "at least one weight must be positive"));
        }
        Ok(())
    }

    /// Largest reward with positive weight.
    pub fn max_reward(&self) -> u32 {
        (1..=3u32).rev().find(|&r| self.weights[r as usize - 1] > 0.0).unwrap_or(0)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let total: f64 = self.weights.iter().sum();
        let mut x = rng.gen::<f64>() * total;
        for (i, w) in self.weights.iter().enumerate() {
            if x < *w {
                return i as u32 + 1;
            }
            x -= w;
        }
        self.max_reward()
    }
}

/// Rejection attempts before environment generation gives up.
const MAX_ENVIRONMENT_ATTEMPTS: usize = 10_000;

/// The static set of resource sites shared by every agent of a run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Environment {
    sites: Vec<ResourceSite>,
    total_reward: u32,
}

impl Environment {
    /// Builds an environment from explicit sites. Site ids must be `0..n` in order.
    pub fn from_sites(sites: Vec<ResourceSite>) -> Result<Self, ConfigError> {
        if sites.is_empty() {
            return Err(ConfigError::invalid("site_count", "environment needs at least one site"));
        }
        for (i, s) in sites.iter().enumerate() {
            if usize::from(s.id.0) != i {
                return Err(ConfigError::invalid("site id", format!("site at index {i} has id {}", s.id)));
            }
        }
        let total_reward = sites.iter().map(ResourceSite::reward).sum();
        Ok(Self { sites, total_reward })
    }

    /// Draws `site_count` sites, redrawing until the total reward reaches a
    /// full day's budget.
    pub fn generate<R: Rng + ?Sized>(
        rng: &mut R,
        site_count: usize,
        rewards: &RewardDistribution,
    ) -> Result<Self, ConfigError> {
        if site_count == 0 || site_count > usize::from(u16::MAX) {
            return Err(ConfigError::invalid("site_count", format!("{site_count} out of range")));
        }
        rewards.validate()?;
        let reachable = site_count as u64 * u64::from(rewards.max_reward());
        if reachable < u64::from(DAY_BUDGET) {
            return Err(ConfigError::invalid(
                "site_count",
                format!("{site_count} sites can hold at most {reachable} rewards, need {DAY_BUDGET}"),
            ));
        }
        let all = [1u8, 2, 3, 4, 5];
        for _ in 0..MAX_ENVIRONMENT_ATTEMPTS {
            let sites: Vec<ResourceSite> = (0..site_count)
                .map(|i| {
                    let reward = rewards.sample(rng) as usize;
                    let locs: Vec<u8> = all.choose_multiple(rng, reward).copied().collect();
                    ResourceSite::new(SiteId(i as u16), &locs).expect("sampled site is valid")
                })
                .collect();
            let env = Self::from_sites(sites)?;
            if env.total_reward >= DAY_BUDGET {
                return Ok(env);
            }
        }
        Err(ConfigError::invalid(
            "site_count",
            format!("no environment with total reward >= {DAY_BUDGET} after {MAX_ENVIRONMENT_ATTEMPTS} draws"),
        ))
    }

    pub fn sites(&self) -> &[ResourceSite] {
        &self.sites
    }

    pub fn site(&self, id: SiteId) -> Option<&ResourceSite> {
        self.sites.get(usize::from(id.0))
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn total_reward(&self) -> u32 {
        self.total_reward
    }

    pub fn records(&self) -> Vec<SiteRecord> {
        self.sites
            .iter()
            .map(|s| SiteRecord { site_id: s.id.0, locations: s.locations.to_vec() })
            .collect()
    }

    pub fn from_records(records: &[SiteRecord]) -> Result<Self, ConfigError> {
        let sites = records
            .iter()
            .map(|r| ResourceSite::new(SiteId(r.site_id), &r.locations))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_sites(sites)
    }
}

/// Serialized form of one site in a run record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site_id: u16,
    pub locations: Vec<u8>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn site(locs: &[u8]) -> ResourceSite {
        ResourceSite::new(SiteId(0), locs).unwrap()
    }

    fn order(o: [u8; 5]) -> SearchOrder {
        SearchOrder::new(o).unwrap()
    }

    #[test]
    fn worked_cost_example() {
        assert_eq!(gather_cost(order([5, 4, 2, 1, 3]), &site(&[1, 2, 4])), 4);
    }

    #[test]
    fn trivial_costs() {
        assert_eq!(gather_cost(order([1, 2, 3, 4, 5]), &site(&[1])), 1);
        assert_eq!(gather_cost(order([1, 2, 4, 5, 3]), &site(&[3])), 5);
    }

    #[test]
    fn optimal_cost_is_reward() {
        assert_eq!(optimal_site_cost(&site(&[1, 2, 4])), 3);
        assert_eq!(optimal_site_cost(&site(&[2])), 1);
    }

    #[test]
    fn two_location_sites_never_cost_less_than_two() {
        let orders = SearchOrder::all();
        for a in 1..=5u8 {
            for b in a + 1..=5 {
                let s = site(&[a, b]);
                assert!(orders.iter().all(|o| gather_cost(*o, &s) >= 2));
            }
        }
    }

    #[test]
    fn enumeration_is_complete() {
        let all = SearchOrder::all();
        assert_eq!(all.len(), 120);
        let distinct: std::collections::HashSet<_> = all.iter().collect();
        assert_eq!(distinct.len(), 120);
    }

    #[test]
    fn rejects_bad_sites_and_orders() {
        assert!(ResourceSite::new(SiteId(0), &[]).is_err());
        assert!(ResourceSite::new(SiteId(0), &[1, 2, 3, 4]).is_err());
        assert!(ResourceSite::new(SiteId(0), &[0]).is_err());
        assert!(ResourceSite::new(SiteId(0), &[2, 2]).is_err());
        assert!(SearchOrder::new([1, 1, 2, 3, 4]).is_err());
        assert!(SearchOrder::new([1, 2, 3, 4, 6]).is_err());
    }

    #[test]
    fn default_environment() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let env = Environment::generate(&mut rng, 50, &RewardDistribution::default()).unwrap();
        assert_eq!(env.len(), 50);
        assert!(env.total_reward() >= 50);
        assert!(env.sites().iter().all(|s| (1..=3).contains(&s.reward())));
    }

    #[test]
    fn single_site_cannot_fill_a_day() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        assert!(Environment::generate(&mut rng, 1, &RewardDistribution::default()).is_err());
    }

    #[test]
    fn generation_is_deterministic() {
        let gen = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Environment::generate(&mut rng, 50, &RewardDistribution::default()).unwrap()
        };
        assert_eq!(gen(42), gen(42));
        assert_ne!(gen(42), gen(43));
    }

    #[test]
    fn records_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let env = Environment::generate(&mut rng, 30, &RewardDistribution::default()).unwrap();
        assert_eq!(Environment::from_records(&env.records()).unwrap(), env);
    }

    #[test]
    fn transposition_changes_exactly_two_positions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let o = SearchOrder::random(&mut rng);
            let t = o.transposed(&mut rng);
            let diff = o.as_array().iter().zip(t.as_array()).filter(|(a, b)| **a != *b).count();
            assert_eq!(diff, 2);
        }
    }
}

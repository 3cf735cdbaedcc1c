//! Daily action programs ("plexes") and the 50-plex sets that make up
//! genomes and memomes.
//!
//! The same structure and the same mutation procedure serve both the genome
//! and the memome; only who calls [`PlexSet::mutate`] differs.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use arrayvec::ArrayVec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::task::{gather_cost, Environment, SearchOrder, SiteId, DAY_BUDGET};

/// Number of plexes in every genome and memome.
pub const PLEXSET_SIZE: usize = 50;

/// Plexes copied over the worst slots in one mutation event.
pub const ELITE_COUNT: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    Gather,
    Reproduce,
    LearnIndividual,
    LearnSocial,
}

impl ActionKind {
    pub const ALL: [ActionKind; 4] =
        [ActionKind::Gather, ActionKind::Reproduce, ActionKind::LearnIndividual, ActionKind::LearnSocial];
}

/// One step of a day's program.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Gather { site: SiteId, order: SearchOrder },
    Reproduce,
    LearnIndividual,
    LearnSocial,
}

impl Action {
    pub fn kind(&self) -> ActionKind {
        match self {
            Action::Gather { .. } => ActionKind::Gather,
            Action::Reproduce => ActionKind::Reproduce,
            Action::LearnIndividual => ActionKind::LearnIndividual,
            Action::LearnSocial => ActionKind::LearnSocial,
        }
    }

    /// Time units this action takes in `env`; `None` for an unknown site.
    pub fn time_cost(&self, env: &Environment) -> Option<u32> {
        match self {
            Action::Gather { site, order } => env.site(*site).map(|s| gather_cost(*order, s)),
            _ => Some(1),
        }
    }
}

/// Compact token form: `G<site>:<order digits>`, `R`, `I` or `S`.
impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::Gather { site, order } => write!(f, "G{site}:{order}"),
            Action::Reproduce => f.write_str("R"),
            Action::LearnIndividual => f.write_str("I"),
            Action::LearnSocial => f.write_str("S"),
        }
    }
}

impl FromStr for Action {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ConfigError::invalid("action", format!("cannot parse {s:?}"));
        match s {
            "R" => Ok(Action::Reproduce),
            "I" => Ok(Action::LearnIndividual),
            "S" => Ok(Action::LearnSocial),
            _ => {
                let rest = s.strip_prefix('G').ok_or_else(bad)?;
                let (site, digits) = rest.split_once(':').ok_or_else(bad)?;
                let site = SiteId(site.parse().map_err(|_| bad())?);
                let bytes = digits.as_bytes();
                if bytes.len() != 5 {
                    return Err(bad());
                }
                let mut order = [0u8; 5];
                for (slot, b) in order.iter_mut().zip(bytes) {
                    *slot = b.wrapping_sub(b'0');
                }
                Ok(Action::Gather { site, order: SearchOrder::new(order)? })
            }
        }
    }
}

impl Serialize for Action {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Action {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Ranking key of a plex. Greater is fitter: more reward, then less time
/// spent gathering, then fewer gather actions. Reproduce and learning
/// actions appear in none of the three, so they rank the same as idle time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FitnessKey {
    pub reward: u32,
    pub gather_time: u32,
    pub gather_count: u32,
}

impl Ord for FitnessKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.reward
            .cmp(&other.reward)
            .then_with(|| other.gather_time.cmp(&self.gather_time))
            .then_with(|| other.gather_count.cmp(&self.gather_count))
    }
}

impl FitnessKey {
    /// Order-preserving encoding into 48 bits: `a.packed() < b.packed()`
    /// exactly when `a < b`.
    pub fn packed(&self) -> u64 {
        debug_assert!(self.gather_time <= 0xFFFF && self.gather_count <= 0xFFFF && self.reward <= 0xFFFF);
        (u64::from(self.reward) << 32)
            | (u64::from(0xFFFF - self.gather_time) << 16)
            | u64::from(0xFFFF - self.gather_count)
    }
}

impl PartialOrd for FitnessKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Non-gathering action tallies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ActionCounts {
    pub reproduce: u32,
    pub learn_individual: u32,
    pub learn_social: u32,
}

/// Every action takes at least one time unit.
pub const MAX_ACTIONS: usize = DAY_BUDGET as usize;

/// An ordered list of actions for one day, with cached totals.
#[derive(Debug, PartialEq, Eq, Hash)]
pub struct Plex {
    actions: ArrayVec<Action, MAX_ACTIONS>,
    total_cost: u32,
    gather_time: u32,
    reward: u32,
    counts: ActionCounts,
}

impl Clone for Plex {
    fn clone(&self) -> Self {
        Self {
            actions: self.actions.clone(),
            total_cost: self.total_cost,
            gather_time: self.gather_time,
            reward: self.reward,
            counts: self.counts,
        }
    }

    // copies only the occupied part of the action buffer
    fn clone_from(&mut self, source: &Self) {
        self.actions.clone_from(&source.actions);
        self.total_cost = source.total_cost;
        self.gather_time = source.gather_time;
        self.reward = source.reward;
        self.counts = source.counts;
    }
}

impl Default for Plex {
    fn default() -> Self {
        Self::empty()
    }
}

impl Plex {
    pub fn empty() -> Self {
        Self { actions: ArrayVec::new(), total_cost: 0, gather_time: 0, reward: 0, counts: ActionCounts::default() }
    }

    /// Validates the action list against `env`: known sites, no site twice,
    /// total cost within the day budget.
    pub fn new(actions: Vec<Action>, env: &Environment) -> Result<Self, ConfigError> {
        if actions.len() > MAX_ACTIONS {
            return Err(ConfigError::invalid(
                "plex",
                format!("{} actions cannot fit in {DAY_BUDGET} time units", actions.len()),
            ));
        }
        let mut plex = Self { actions: actions.into_iter().collect(), ..Self::empty() };
        let mut seen = vec![false; env.len()];
        for a in &plex.actions {
            if let Action::Gather { site, .. } = a {
                let idx = usize::from(site.0);
                if idx >= seen.len() {
                    return Err(ConfigError::invalid("plex", format!("unknown site {site}")));
                }
                if std::mem::replace(&mut seen[idx], true) {
                    return Err(ConfigError::invalid("plex", format!("site {site} gathered twice")));
                }
            }
        }
        plex.recompute(env);
        if plex.total_cost > DAY_BUDGET {
            return Err(ConfigError::invalid(
                "plex",
                format!("total cost {} exceeds {DAY_BUDGET}", plex.total_cost),
            ));
        }
        Ok(plex)
    }

    /// Adds (`sign = 1`) or withdraws (`sign = -1`) one action's share of
    /// the cached totals.
    fn account(&mut self, action: Action, env: &Environment, sign: i32) {
        let apply = |x: &mut u32, d: u32| *x = x.wrapping_add_signed(sign * d as i32);
        match action {
            Action::Gather { site, order } => {
                let s = env.site(site).expect("plex references a site of its environment");
                let c = gather_cost(order, s);
                apply(&mut self.total_cost, c);
                apply(&mut self.gather_time, c);
                apply(&mut self.reward, s.reward());
            }
            Action::Reproduce => {
                apply(&mut self.total_cost, 1);
                apply(&mut self.counts.reproduce, 1);
            }
            Action::LearnIndividual => {
                apply(&mut self.total_cost, 1);
                apply(&mut self.counts.learn_individual, 1);
            }
            Action::LearnSocial => {
                apply(&mut self.total_cost, 1);
                apply(&mut self.counts.learn_social, 1);
            }
        }
    }

    fn recompute(&mut self, env: &Environment) {
        let (mut total, mut gather, mut reward) = (0, 0, 0);
        let mut counts = ActionCounts::default();
        for a in &self.actions {
            match a {
                Action::Gather { site, order } => {
                    let s = env.site(*site).expect("plex references a site of its environment");
                    let c = gather_cost(*order, s);
                    total += c;
                    gather += c;
                    reward += s.reward();
                }
                Action::Reproduce => {
                    total += 1;
                    counts.reproduce += 1;
                }
                Action::LearnIndividual => {
                    total += 1;
                    counts.learn_individual += 1;
                }
                Action::LearnSocial => {
                    total += 1;
                    counts.learn_social += 1;
                }
            }
        }
        self.total_cost = total;
        self.gather_time = gather;
        self.reward = reward;
        self.counts = counts;
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn total_cost(&self) -> u32 {
        self.total_cost
    }

    pub fn gather_time(&self) -> u32 {
        self.gather_time
    }

    pub fn reward(&self) -> u32 {
        self.reward
    }

    pub fn counts(&self) -> ActionCounts {
        self.counts
    }

    pub fn gather_count(&self) -> u32 {
        let c = self.counts;
        self.actions.len() as u32 - c.reproduce - c.learn_individual - c.learn_social
    }

    pub fn fitness(&self) -> FitnessKey {
        FitnessKey { reward: self.reward, gather_time: self.gather_time, gather_count: self.gather_count() }
    }

}

/// Recomputes the fitness key of `plex` from scratch against `env`.
pub fn plex_fitness(plex: &Plex, env: &Environment) -> FitnessKey {
    let mut p = plex.clone();
    p.recompute(env);
    p.fitness()
}

/// How a gathering strategy is changed by a strategy-change edit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyEdit {
    /// Fresh uniformly random permutation.
    #[default]
    Shuffle,
    /// Swap two positions of the current order.
    Transpose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MutationOptions {
    pub strategy_edit: StrategyEdit,
    /// Draws allowed before an infeasible edit becomes a no-op.
    pub max_attempts: u32,
}

impl Default for MutationOptions {
    fn default() -> Self {
        Self { strategy_edit: StrategyEdit::Shuffle, max_attempts: 5 }
    }
}

/// The three single-plex edits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EditKind {
    StrategyChange,
    Add,
    Remove,
}

/// Applies one uniformly chosen edit to `plex` in place. Returns the edit
/// that took effect, or `None` when the chosen edit was infeasible.
pub fn mutate_plex<R: Rng + ?Sized>(
    plex: &mut Plex,
    env: &Environment,
    opts: &MutationOptions,
    rng: &mut R,
) -> Option<EditKind> {
    match rng.gen_range(0..3) {
        0 => change_strategy(plex, env, opts, rng).then_some(EditKind::StrategyChange),
        1 => add_action(plex, env, opts, rng).then_some(EditKind::Add),
        _ => remove_action(plex, env, rng).then_some(EditKind::Remove),
    }
}

fn change_strategy<R: Rng + ?Sized>(plex: &mut Plex, env: &Environment, opts: &MutationOptions, rng: &mut R) -> bool {
    let is_gather = |a: &Action| a.kind() == ActionKind::Gather;
    let gathers = plex.actions.iter().filter(|a| is_gather(a)).count();
    if gathers == 0 {
        return false;
    }
    for _ in 0..opts.max_attempts.max(1) {
        let k = rng.gen_range(0..gathers);
        let (idx, _) = plex.actions.iter().enumerate().filter(|(_, a)| is_gather(a)).nth(k).expect("k < gathers");
        let Action::Gather { site, order } = plex.actions[idx] else { unreachable!() };
        let new_order = match opts.strategy_edit {
            StrategyEdit::Shuffle => SearchOrder::random(rng),
            StrategyEdit::Transpose => order.transposed(rng),
        };
        let s = env.site(site).expect("known site");
        let new_total = plex.total_cost - gather_cost(order, s) + gather_cost(new_order, s);
        if new_total <= DAY_BUDGET {
            plex.account(plex.actions[idx], env, -1);
            plex.actions[idx] = Action::Gather { site, order: new_order };
            plex.account(plex.actions[idx], env, 1);
            return true;
        }
    }
    false
}

fn add_action<R: Rng + ?Sized>(plex: &mut Plex, env: &Environment, opts: &MutationOptions, rng: &mut R) -> bool {
    for _ in 0..opts.max_attempts.max(1) {
        let action = match ActionKind::ALL[rng.gen_range(0..4)] {
            ActionKind::Gather => {
                let Some(site) = random_unused_site(plex, env, rng) else { continue };
                Action::Gather { site, order: SearchOrder::random(rng) }
            }
            ActionKind::Reproduce => Action::Reproduce,
            ActionKind::LearnIndividual => Action::LearnIndividual,
            ActionKind::LearnSocial => Action::LearnSocial,
        };
        let cost = action.time_cost(env).expect("known site");
        if plex.total_cost + cost > DAY_BUDGET {
            continue;
        }
        let pos = rng.gen_range(0..=plex.actions.len());
        plex.actions.insert(pos, action);
        plex.account(action, env, 1);
        return true;
    }
    false
}

/// Uniform choice among the sites `plex` does not gather from yet.
fn random_unused_site<R: Rng + ?Sized>(plex: &Plex, env: &Environment, rng: &mut R) -> Option<SiteId> {
    let mut inline = [0u64; 8];
    let mut heap = Vec::new();
    let words = env.len().div_ceil(64);
    let used: &mut [u64] = if words <= inline.len() {
        &mut inline[..words]
    } else {
        heap.resize(words, 0);
        &mut heap
    };
    let mut used_count = 0;
    for a in &plex.actions {
        if let Action::Gather { site, .. } = a {
            let i = usize::from(site.0);
            used[i / 64] |= 1 << (i % 64);
            used_count += 1;
        }
    }
    let free = env.len() - used_count;
    if free == 0 {
        return None;
    }
    let mut k = rng.gen_range(0..free);
    for i in 0..env.len() {
        if used[i / 64] & (1 << (i % 64)) == 0 {
            if k == 0 {
                return Some(SiteId(i as u16));
            }
            k -= 1;
        }
    }
    unreachable!("free site count matches bitmap")
}

fn remove_action<R: Rng + ?Sized>(plex: &mut Plex, env: &Environment, rng: &mut R) -> bool {
    if plex.actions.is_empty() {
        return false;
    }
    let idx = rng.gen_range(0..plex.actions.len());
    let removed = plex.actions.remove(idx);
    plex.account(removed, env, -1);
    true
}

/// A genome or memome: exactly [`PLEXSET_SIZE`] plexes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PlexSet {
    plexes: Vec<Plex>,
}

impl PlexSet {
    pub fn new(plexes: Vec<Plex>) -> Result<Self, ConfigError> {
        if plexes.len() != PLEXSET_SIZE {
            return Err(ConfigError::invalid(
                "plex set",
                format!("{} plexes, expected {PLEXSET_SIZE}", plexes.len()),
            ));
        }
        Ok(Self { plexes })
    }

    /// Every plex holds one gathering action at a random site with a random order.
    pub fn random_initial<R: Rng + ?Sized>(env: &Environment, rng: &mut R) -> Self {
        let plexes = (0..PLEXSET_SIZE)
            .map(|_| {
                let site = SiteId(rng.gen_range(0..env.len()) as u16);
                let order = SearchOrder::random(rng);
                Plex::new(vec![Action::Gather { site, order }], env).expect("single gather fits the budget")
            })
            .collect();
        Self { plexes }
    }

    pub fn plexes(&self) -> &[Plex] {
        &self.plexes
    }

    pub fn get(&self, slot: usize) -> &Plex {
        &self.plexes[slot]
    }

    /// Slot indices from fittest to least fit; equal keys keep slot order.
    pub fn ranking(&self) -> Vec<usize> {
        let keys: Vec<FitnessKey> = self.plexes.iter().map(Plex::fitness).collect();
        let mut idx: Vec<usize> = (0..self.plexes.len()).collect();
        idx.sort_by(|&a, &b| keys[b].cmp(&keys[a]).then(a.cmp(&b)));
        idx
    }

    /// Slot of the fittest plex, lowest slot on ties.
    pub fn best_slot(&self) -> usize {
        let mut best = 0;
        let mut key = self.plexes[0].fitness();
        for (i, p) in self.plexes.iter().enumerate().skip(1) {
            let k = p.fitness();
            if k > key {
                best = i;
                key = k;
            }
        }
        best
    }

    pub fn best(&self) -> &Plex {
        &self.plexes[self.best_slot()]
    }

    /// The `n` fittest plexes, fittest first.
    pub fn top(&self, n: usize) -> Vec<&Plex> {
        self.ranking().into_iter().take(n).map(|i| &self.plexes[i]).collect()
    }

    /// Slots of the [`ELITE_COUNT`] fittest plexes (fittest first) and of
    /// the [`ELITE_COUNT`] least fit (least fit first), agreeing with
    /// [`PlexSet::ranking`] without sorting the whole set.
    pub fn extremes(&self) -> ([usize; ELITE_COUNT], [usize; ELITE_COUNT]) {
        // one integer per slot; the lower slot wins ties
        let rank: [u64; PLEXSET_SIZE] =
            std::array::from_fn(|i| (self.plexes[i].fitness().packed() << 16) | (0xFFFF - i as u64));
        let mut best: [usize; ELITE_COUNT] = std::array::from_fn(|i| i);
        best.sort_by(|&a, &b| rank[b].cmp(&rank[a]));
        let mut worst = best;
        worst.reverse();
        for (i, &r) in rank.iter().enumerate().skip(ELITE_COUNT) {
            if r > rank[best[ELITE_COUNT - 1]] {
                let mut j = ELITE_COUNT - 1;
                while j > 0 && r > rank[best[j - 1]] {
                    best[j] = best[j - 1];
                    j -= 1;
                }
                best[j] = i;
            }
            if r < rank[worst[ELITE_COUNT - 1]] {
                let mut j = ELITE_COUNT - 1;
                while j > 0 && r < rank[worst[j - 1]] {
                    worst[j] = worst[j - 1];
                    j -= 1;
                }
                worst[j] = i;
            }
        }
        (best, worst)
    }

    /// Overwrites the least-fit slots: the i-th replacement lands in the
    /// i-th worst slot.
    pub fn replace_worst(&mut self, replacements: &[Plex]) {
        assert!(replacements.len() <= ELITE_COUNT);
        let (_, worst) = self.extremes();
        for (plex, &slot) in replacements.iter().zip(worst.iter()) {
            self.plexes[slot] = plex.clone();
        }
    }

    /// One mutation event: the five fittest plexes are copied over the five
    /// least fit and each copy receives one edit. The originals stay put.
    pub fn mutate<R: Rng + ?Sized>(
        &mut self,
        env: &Environment,
        opts: &MutationOptions,
        rng: &mut R,
    ) -> [Option<EditKind>; ELITE_COUNT] {
        let (best, worst) = self.extremes();
        let mut edits = [None; ELITE_COUNT];
        for (i, edit) in edits.iter_mut().enumerate() {
            let (src, dst) = (best[i], worst[i]);
            if src != dst {
                let (from, to) = if src < dst {
                    let (lo, hi) = self.plexes.split_at_mut(dst);
                    (&lo[src], &mut hi[0])
                } else {
                    let (lo, hi) = self.plexes.split_at_mut(src);
                    (&hi[0], &mut lo[dst])
                };
                to.clone_from(from);
            }
            *edit = mutate_plex(&mut self.plexes[dst], env, opts, rng);
        }
        edits
    }
}

/// Functional form of [`PlexSet::mutate`].
pub fn mutate_plexset<R: Rng + ?Sized>(
    set: &PlexSet,
    env: &Environment,
    opts: &MutationOptions,
    rng: &mut R,
) -> PlexSet {
    let mut out = set.clone();
    out.mutate(env, opts, rng);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::task::{RewardDistribution, ResourceSite};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn plex_total_cost(p: &Plex, env: &Environment) -> u32 {
        p.actions().iter().map(|a| a.time_cost(env).unwrap()).sum()
    }

    /// Fifty single-location sites: every gather with an order starting at
    /// the occupied location costs one unit.
    fn unit_env() -> Environment {
        let sites = (0..50u16).map(|i| ResourceSite::new(SiteId(i), &[(i % 5) as u8 + 1]).unwrap()).collect();
        Environment::from_sites(sites).unwrap()
    }

    fn unit_gather(env: &Environment, i: u16) -> Action {
        let loc = env.site(SiteId(i)).unwrap().locations().to_vec()[0];
        let mut order = [loc, 0, 0, 0, 0];
        let mut k = 1;
        for l in 1..=5u8 {
            if l != loc {
                order[k] = l;
                k += 1;
            }
        }
        Action::Gather { site: SiteId(i), order: SearchOrder::new(order).unwrap() }
    }

    fn generated_env(seed: u64) -> Environment {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Environment::generate(&mut rng, 50, &RewardDistribution::default()).unwrap()
    }

    #[test]
    fn optimal_single_gather() {
        let env = Environment::from_sites(vec![ResourceSite::new(SiteId(0), &[1, 2, 4]).unwrap()]).unwrap();
        let order = SearchOrder::new([1, 2, 4, 5, 3]).unwrap();
        let plex = Plex::new(vec![Action::Gather { site: SiteId(0), order }], &env).unwrap();
        let key = plex_fitness(&plex, &env);
        assert_eq!((key.reward, key.gather_time), (3, 3));
    }

    #[test]
    fn converged_social_plex_scores_48() {
        let env = unit_env();
        let mut actions: Vec<Action> = (0..48).map(|i| unit_gather(&env, i)).collect();
        actions.push(Action::LearnSocial);
        actions.push(Action::LearnIndividual);
        let plex = Plex::new(actions, &env).unwrap();
        assert_eq!(plex.reward(), 48);
        assert_eq!(plex.total_cost(), 50);
        assert_eq!(plex.counts(), ActionCounts { reproduce: 0, learn_individual: 1, learn_social: 1 });
    }

    #[test]
    fn tie_break_prefers_less_gathering_time() {
        let a = FitnessKey { reward: 10, gather_time: 12, gather_count: 9 };
        let b = FitnessKey { reward: 10, gather_time: 15, gather_count: 4 };
        assert!(a > b);
        let c = FitnessKey { reward: 11, gather_time: 40, gather_count: 20 };
        assert!(c > a);
    }

    #[test]
    fn packed_key_preserves_order() {
        let keys: Vec<FitnessKey> = (0..4)
            .flat_map(|r| (0..4).flat_map(move |t| (0..3).map(move |c| (r, t, c))))
            .map(|(reward, t, c)| FitnessKey { reward: reward * 7, gather_time: t * 11, gather_count: c * 5 })
            .collect();
        for a in &keys {
            for b in &keys {
                assert_eq!(a.cmp(b), a.packed().cmp(&b.packed()), "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn cached_totals_track_edits() {
        let env = generated_env(8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut set = PlexSet::random_initial(&env, &mut rng);
        for _ in 0..300 {
            set.mutate(&env, &MutationOptions::default(), &mut rng);
            for p in set.plexes() {
                assert_eq!(p.fitness(), plex_fitness(p, &env));
                assert_eq!(p.total_cost(), plex_total_cost(p, &env));
            }
        }
    }

    #[test]
    fn inert_actions_rank_like_idle_time() {
        let env = unit_env();
        let base: Vec<Action> = (0..10).map(|i| unit_gather(&env, i)).collect();
        let idle = Plex::new(base.clone(), &env).unwrap();
        for extra in [Action::Reproduce, Action::LearnIndividual, Action::LearnSocial] {
            let mut actions = base.clone();
            actions.extend([extra, extra]);
            let busy = Plex::new(actions, &env).unwrap();
            assert_eq!(busy.fitness().cmp(&idle.fitness()), Ordering::Equal);
        }
        let fewer = Plex::new(base[..9].to_vec(), &env).unwrap();
        assert!(idle.fitness() > fewer.fitness());
    }

    #[test]
    fn learning_time_is_not_gathering_time() {
        let env = unit_env();
        let base: Vec<Action> = (0..10).map(|i| unit_gather(&env, i)).collect();
        let mut with_learning = base.clone();
        with_learning.extend([Action::LearnIndividual, Action::LearnSocial]);
        let learner = Plex::new(with_learning, &env).unwrap();
        let idle = Plex::new(base.clone(), &env).unwrap();
        assert_eq!(learner.fitness().reward, idle.fitness().reward);
        assert_eq!(learner.fitness().gather_time, idle.fitness().gather_time);

        // same reward reached with a costlier search order ranks lower
        let mut slow = base;
        let Action::Gather { site, .. } = slow[0] else { unreachable!() };
        let loc = env.site(site).unwrap().locations().to_vec()[0];
        let mut order: Vec<u8> = (1..=5).filter(|l| *l != loc).collect();
        order.push(loc);
        slow[0] = Action::Gather { site, order: SearchOrder::new(order.try_into().unwrap()).unwrap() };
        let slow = Plex::new(slow, &env).unwrap();
        assert!(learner.fitness() > slow.fitness());
    }

    #[test]
    fn rejects_invalid_plexes() {
        let env = unit_env();
        let g = unit_gather(&env, 0);
        assert!(Plex::new(vec![g, g], &env).is_err());
        assert!(Plex::new(vec![Action::Reproduce; 51], &env).is_err());
        let stray = Action::Gather { site: SiteId(99), order: SearchOrder::IDENTITY };
        assert!(Plex::new(vec![stray], &env).is_err());
    }

    #[test]
    fn remove_on_empty_plex_is_noop() {
        let env = unit_env();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut plex = Plex::empty();
        assert!(!remove_action(&mut plex, &env, &mut rng));
        assert!(!change_strategy(&mut plex, &env, &MutationOptions::default(), &mut rng));
        assert_eq!(plex, Plex::empty());
    }

    #[test]
    fn add_on_full_budget_is_noop() {
        let env = unit_env();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let full = Plex::new(vec![Action::Reproduce; 50], &env).unwrap();
        for _ in 0..200 {
            let mut p = full.clone();
            assert!(!add_action(&mut p, &env, &MutationOptions::default(), &mut rng));
            assert_eq!(p, full);
        }
    }

    #[test]
    fn edit_classes_are_equally_likely() {
        // every edit is feasible on this plex, so each class should take a third
        let env = unit_env();
        let plex = Plex::new((0..10).map(|i| unit_gather(&env, i)).collect(), &env).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut counts = [0u32; 3];
        let trials = 10_000;
        for _ in 0..trials {
            let mut p = plex.clone();
            match mutate_plex(&mut p, &env, &MutationOptions::default(), &mut rng) {
                Some(EditKind::StrategyChange) => counts[0] += 1,
                Some(EditKind::Add) => counts[1] += 1,
                Some(EditKind::Remove) => counts[2] += 1,
                None => panic!("degenerate edit on a feasible plex"),
            }
            assert!(p.total_cost() <= DAY_BUDGET);
        }
        let expected = trials as f64 / 3.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 2 degrees of freedom, p = 0.001
        assert!(chi2 < 13.82, "chi-square {chi2} for {counts:?}");
    }

    #[test]
    fn mutation_keeps_plex_invariants() {
        let env = generated_env(9);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut plex = Plex::empty();
        for _ in 0..20_000 {
            mutate_plex(&mut plex, &env, &MutationOptions::default(), &mut rng);
            assert!(plex.total_cost() <= DAY_BUDGET);
            let rebuilt = Plex::new(plex.actions().to_vec(), &env).unwrap();
            assert_eq!(rebuilt, plex);
        }
    }

    #[test]
    fn initial_sets_are_single_gathers() {
        let env = generated_env(1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = PlexSet::random_initial(&env, &mut rng);
        assert_eq!(set.plexes().len(), PLEXSET_SIZE);
        for p in set.plexes() {
            assert_eq!(p.len(), 1);
            assert_eq!(p.actions()[0].kind(), ActionKind::Gather);
            assert!((1..=3).contains(&p.reward()));
        }
        let mut rng2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(PlexSet::random_initial(&env, &mut rng2), set);
    }

    #[test]
    fn mutation_event_keeps_elite_and_touches_five_slots() {
        let env = generated_env(2);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut set = PlexSet::random_initial(&env, &mut rng);
        for _ in 0..50 {
            set.mutate(&env, &MutationOptions::default(), &mut rng);
        }
        let before = set.clone();
        let elite: Vec<Plex> = before.top(ELITE_COUNT).into_iter().cloned().collect();
        set.mutate(&env, &MutationOptions::default(), &mut rng);
        for p in &elite {
            assert!(set.plexes().contains(p));
        }
        let unchanged = before.plexes().iter().zip(set.plexes()).filter(|(a, b)| a == b).count();
        assert!(unchanged >= PLEXSET_SIZE - ELITE_COUNT);
    }

    #[test]
    fn identical_set_changes_at_most_five_slots() {
        let env = unit_env();
        let plex = Plex::new((0..20).map(|i| unit_gather(&env, i)).collect(), &env).unwrap();
        let set = PlexSet::new(vec![plex.clone(); PLEXSET_SIZE]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = mutate_plexset(&set, &env, &MutationOptions::default(), &mut rng);
        assert!(out.plexes().iter().filter(|p| **p == plex).count() >= 45);
    }

    #[test]
    fn best_reward_is_monotone_under_mutation() {
        let env = generated_env(3);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut set = PlexSet::random_initial(&env, &mut rng);
        let mut best = set.best().fitness();
        for _ in 0..1_000 {
            set.mutate(&env, &MutationOptions::default(), &mut rng);
            let now = set.best().fitness();
            assert!(now >= best);
            best = now;
        }
        assert!(best.reward > 3);
    }

    #[test]
    fn best_slot_agrees_with_ranking() {
        let env = generated_env(6);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut set = PlexSet::random_initial(&env, &mut rng);
        for _ in 0..100 {
            set.mutate(&env, &MutationOptions::default(), &mut rng);
            assert_eq!(set.best_slot(), set.ranking()[0]);
        }
    }

    #[test]
    fn extremes_agree_with_full_ranking() {
        let env = generated_env(12);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut set = PlexSet::random_initial(&env, &mut rng);
        for _ in 0..300 {
            set.mutate(&env, &MutationOptions::default(), &mut rng);
            let ranking = set.ranking();
            let (best, worst) = set.extremes();
            assert_eq!(best[..], ranking[..ELITE_COUNT]);
            let tail: Vec<usize> = ranking.iter().rev().take(ELITE_COUNT).copied().collect();
            assert_eq!(worst[..], tail[..]);
        }
    }

    #[test]
    fn action_tokens_round_trip() {
        let env = generated_env(8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut plex = Plex::empty();
        for _ in 0..300 {
            mutate_plex(&mut plex, &env, &MutationOptions::default(), &mut rng);
        }
        let json = serde_json::to_string(plex.actions()).unwrap();
        let back: Vec<Action> = serde_json::from_str(&json).unwrap();
        assert_eq!(Plex::new(back, &env).unwrap(), plex);
        assert!("G1:11234".parse::<Action>().is_err());
        assert!("X".parse::<Action>().is_err());
    }
}

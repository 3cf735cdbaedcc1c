//! Agents, their daily behavior, breeding tickets, birth and death.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engine::Treatment;
use crate::plex::{Action, MutationOptions, PlexSet};
use crate::task::Environment;

/// Resources per breeding ticket.
pub const REWARD_PER_TICKET: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Agent {
    id: AgentId,
    genome: PlexSet,
    pub(crate) memome: PlexSet,
    birth_day: u32,
    cumulative_reward: u64,
    days_lived: u32,
}

impl Agent {
    /// A newborn whose memome is a copy of its genome.
    pub fn new(id: AgentId, genome: PlexSet, birth_day: u32) -> Self {
        let memome = genome.clone();
        Self { id, genome, memome, birth_day, cumulative_reward: 0, days_lived: 0 }
    }

    /// Rebuilds an agent mid-life, e.g. from a stored run record.
    pub fn restore(
        id: AgentId,
        genome: PlexSet,
        memome: PlexSet,
        birth_day: u32,
        cumulative_reward: u64,
        days_lived: u32,
    ) -> Self {
        Self { id, genome, memome, birth_day, cumulative_reward, days_lived }
    }

    pub fn id(&self) -> AgentId {
        self.id
    }

    pub fn genome(&self) -> &PlexSet {
        &self.genome
    }

    pub fn memome(&self) -> &PlexSet {
        &self.memome
    }

    pub fn birth_day(&self) -> u32 {
        self.birth_day
    }

    pub fn cumulative_reward(&self) -> u64 {
        self.cumulative_reward
    }

    /// Days lived, which is also the agent's age.
    pub fn days_lived(&self) -> u32 {
        self.days_lived
    }

    /// Carries out the fittest memeplex and books the day's reward.
    pub fn execute_day(&mut self) -> DayOutcome {
        let plex = self.memome.best();
        let counts = plex.counts();
        let reward = plex.reward();
        self.cumulative_reward += u64::from(reward);
        self.days_lived += 1;
        DayOutcome {
            reward,
            reproduce_count: counts.reproduce,
            learn_individual_count: counts.learn_individual,
            learn_social_count: counts.learn_social,
            breeding_tickets: reward / REWARD_PER_TICKET + counts.reproduce,
        }
    }

    /// Lifetime average reward minus age, with age counted in units of
    /// `age_unit_days` days; `None` before the first full day.
    pub fn fitness(&self, age_unit_days: u32) -> Option<AgentFitness> {
        (self.days_lived > 0).then_some(AgentFitness {
            cumulative_reward: self.cumulative_reward,
            days_lived: self.days_lived,
            age_unit_days,
        })
    }

    pub fn genome_hash(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        hash_plexset(&mut h, &self.genome);
        h.finalize().into()
    }
}

/// Tallies of the plex an agent carried out today.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub reward: u32,
    pub reproduce_count: u32,
    pub learn_individual_count: u32,
    pub learn_social_count: u32,
    pub breeding_tickets: u32,
}

/// Default length of one unit of age: a week.
pub const DEFAULT_AGE_UNIT_DAYS: u32 = 7;

/// `cumulative_reward / days_lived - days_lived / age_unit_days`, compared
/// exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentFitness {
    pub cumulative_reward: u64,
    pub days_lived: u32,
    pub age_unit_days: u32,
}

impl AgentFitness {
    pub fn value(&self) -> f64 {
        let d = f64::from(self.days_lived);
        self.cumulative_reward as f64 / d - d / f64::from(self.age_unit_days)
    }

    // numerator over days_lived * age_unit_days
    fn numerator(&self) -> i128 {
        let d = i128::from(self.days_lived);
        i128::from(self.age_unit_days) * i128::from(self.cumulative_reward) - d * d
    }

    fn denominator(&self) -> i128 {
        i128::from(self.days_lived) * i128::from(self.age_unit_days)
    }
}

impl Ord for AgentFitness {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.numerator() * other.denominator()).cmp(&(other.numerator() * self.denominator()))
    }
}

impl PartialOrd for AgentFitness {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Functional form of [`Agent::fitness`]; `None` for newborns.
pub fn agent_fitness(agent: &Agent, age_unit_days: u32) -> Option<f64> {
    agent.fitness(age_unit_days).map(|f| f.value())
}

/// Mutates the memome once per individual-learning action carried out
/// today, when the treatment makes that action effective. Returns the
/// number of mutation events applied.
pub fn apply_individual_learning<R: Rng + ?Sized>(
    agent: &mut Agent,
    outcome: &DayOutcome,
    env: &Environment,
    treatment: Treatment,
    opts: &MutationOptions,
    rng: &mut R,
) -> u32 {
    if !treatment.individual_learning() {
        return 0;
    }
    for _ in 0..outcome.learn_individual_count {
        agent.memome.mutate(env, opts, rng);
    }
    outcome.learn_individual_count
}

/// Index of a parent drawn with probability proportional to `tickets`,
/// or uniformly when nobody holds a ticket.
pub fn select_parent<R: Rng + ?Sized>(tickets: &[u32], rng: &mut R) -> usize {
    assert!(!tickets.is_empty(), "parent selection needs a population");
    let total: u64 = tickets.iter().map(|&t| u64::from(t)).sum();
    if total == 0 {
        return rng.gen_range(0..tickets.len());
    }
    let mut x = rng.gen_range(0..total);
    for (i, &t) in tickets.iter().enumerate() {
        let t = u64::from(t);
        if x < t {
            return i;
        }
        x -= t;
    }
    unreachable!("draw below ticket total")
}

/// A new agent whose genome is the parent's genome after one mutation event.
pub fn spawn_child<R: Rng + ?Sized>(
    parent: &Agent,
    id: AgentId,
    day: u32,
    env: &Environment,
    opts: &MutationOptions,
    rng: &mut R,
) -> Agent {
    let mut genome = parent.genome.clone();
    genome.mutate(env, opts, rng);
    Agent::new(id, genome, day)
}

/// Index of the agent that dies next: lowest fitness among agents that
/// have lived at least one day, then the oldest, then the lowest id.
pub fn least_fit(agents: &[Agent], age_unit_days: u32) -> Option<usize> {
    agents
        .iter()
        .enumerate()
        .filter_map(|(i, a)| a.fitness(age_unit_days).map(|f| (i, a, f)))
        .min_by(|(_, a, fa), (_, b, fb)| {
            fa.cmp(fb).then_with(|| b.days_lived.cmp(&a.days_lived)).then_with(|| a.id.cmp(&b.id))
        })
        .map(|(i, _, _)| i)
}

/// Identities involved in one birth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BirthEvent {
    pub parent: AgentId,
    pub child: AgentId,
    pub died: AgentId,
}

/// One birth followed by one death among the agents alive before the birth.
#[allow(clippy::too_many_arguments)]
pub fn birth_and_death<R: Rng + ?Sized>(
    population: &mut Vec<Agent>,
    parent: usize,
    child_id: AgentId,
    env: &Environment,
    opts: &MutationOptions,
    age_unit_days: u32,
    rng: &mut R,
    day: u32,
) -> BirthEvent {
    let child = spawn_child(&population[parent], child_id, day, env, opts, rng);
    let parent_id = population[parent].id;
    let dead = least_fit(population, age_unit_days).expect("someone has lived a day");
    let died = population.remove(dead).id;
    population.push(child);
    BirthEvent { parent: parent_id, child: child_id, died }
}

pub(crate) fn hash_plexset(h: &mut Sha256, set: &PlexSet) {
    for plex in set.plexes() {
        h.update((plex.len() as u32).to_le_bytes());
        for a in plex.actions() {
            match a {
                Action::Gather { site, order } => {
                    h.update([0u8]);
                    h.update(site.0.to_le_bytes());
                    h.update(order.as_array());
                }
                Action::Reproduce => h.update([1u8]),
                Action::LearnIndividual => h.update([2u8]),
                Action::LearnSocial => h.update([3u8]),
            }
        }
    }
}

/// SHA-256 over every agent's identity, life statistics, genome and memome.
pub fn population_hash(agents: &[Agent]) -> String {
    let mut h = Sha256::new();
    h.update((agents.len() as u64).to_le_bytes());
    for a in agents {
        h.update(a.id.0.to_le_bytes());
        h.update(a.birth_day.to_le_bytes());
        h.update(a.cumulative_reward.to_le_bytes());
        h.update(a.days_lived.to_le_bytes());
        hash_plexset(&mut h, &a.genome);
        hash_plexset(&mut h, &a.memome);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plex::{Plex, PLEXSET_SIZE};
    use crate::task::{RewardDistribution, ResourceSite, SearchOrder, SiteId};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_env() -> Environment {
        let sites = (0..50u16).map(|i| ResourceSite::new(SiteId(i), &[1]).unwrap()).collect();
        Environment::from_sites(sites).unwrap()
    }

    fn gathers(n: u16) -> Vec<Action> {
        (0..n).map(|i| Action::Gather { site: SiteId(i), order: SearchOrder::IDENTITY }).collect()
    }

    fn agent_with_best(env: &Environment, actions: Vec<Action>) -> Agent {
        let best = Plex::new(actions, env).unwrap();
        let mut plexes = vec![Plex::empty(); PLEXSET_SIZE];
        plexes[7] = best;
        Agent::new(AgentId(0), PlexSet::new(plexes).unwrap(), 0)
    }

    fn with_life(id: u64, cumulative: u64, days: u32) -> Agent {
        let env = unit_env();
        let mut a = agent_with_best(&env, gathers(1));
        a.id = AgentId(id);
        a.cumulative_reward = cumulative;
        a.days_lived = days;
        a
    }

    #[test]
    fn converged_social_day() {
        let env = unit_env();
        let mut actions = gathers(48);
        actions.extend([Action::LearnSocial, Action::LearnIndividual]);
        let mut agent = agent_with_best(&env, actions);
        let out = agent.execute_day();
        assert_eq!(out.reward, 48);
        assert_eq!(out.breeding_tickets, 9);
        assert_eq!((out.learn_social_count, out.learn_individual_count), (1, 1));
        assert_eq!((agent.cumulative_reward(), agent.days_lived()), (48, 1));
    }

    #[test]
    fn reproduce_actions_add_tickets() {
        let env = unit_env();
        let mut actions = gathers(23);
        actions.extend([Action::Reproduce, Action::Reproduce]);
        let out = agent_with_best(&env, actions).execute_day();
        assert_eq!(out.breeding_tickets, 6);
        let out = agent_with_best(&env, gathers(4)).execute_day();
        assert_eq!(out.breeding_tickets, 0);
    }

    #[test]
    fn fitness_formula() {
        assert_eq!(agent_fitness(&with_life(0, 120, 4), 1), Some(26.0));
        assert_eq!(agent_fitness(&with_life(0, 0, 10), 1), Some(-10.0));
        assert_eq!(agent_fitness(&with_life(0, 0, 0), 1), None);
        assert_eq!(agent_fitness(&with_life(0, 140, 14), 7), Some(8.0));
        for unit in [1, 7] {
            let young = with_life(0, 30 * 5, 5).fitness(unit).unwrap();
            let old = with_life(1, 30 * 9, 9).fitness(unit).unwrap();
            assert!(old < young);
        }
    }

    #[test]
    fn exact_fitness_ordering_matches_float() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let mut draw = || AgentFitness {
                cumulative_reward: rng.gen_range(0..5000),
                days_lived: rng.gen_range(1..200),
                age_unit_days: rng.gen_range(1..10),
            };
            let (a, b) = (draw(), draw());
            let (fa, fb) = (a.value(), b.value());
            if (fa - fb).abs() > 1e-9 {
                assert_eq!(a.cmp(&b), fa.partial_cmp(&fb).unwrap());
            }
        }
    }

    #[test]
    fn learning_respects_treatment() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let env = {
            let mut r = ChaCha8Rng::seed_from_u64(2);
            Environment::generate(&mut r, 50, &RewardDistribution::default()).unwrap()
        };
        let genome = PlexSet::random_initial(&env, &mut rng);
        let opts = MutationOptions::default();
        let outcome = DayOutcome { learn_individual_count: 2, ..Default::default() };

        let mut a = Agent::new(AgentId(1), genome.clone(), 0);
        assert_eq!(apply_individual_learning(&mut a, &outcome, &env, Treatment::NonLearning, &opts, &mut rng), 0);
        assert_eq!(a.memome(), a.genome());

        let idle = DayOutcome::default();
        assert_eq!(apply_individual_learning(&mut a, &idle, &env, Treatment::Full, &opts, &mut rng), 0);
        assert_eq!(a.memome(), a.genome());

        let mut expected = genome.clone();
        let mut rng_a = ChaCha8Rng::seed_from_u64(3);
        let mut rng_b = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(apply_individual_learning(&mut a, &outcome, &env, Treatment::Full, &opts, &mut rng_a), 2);
        expected.mutate(&env, &opts, &mut rng_b);
        expected.mutate(&env, &opts, &mut rng_b);
        assert_eq!(a.memome(), &expected);
        assert_eq!(a.genome(), &genome);
    }

    #[test]
    fn dominant_ticket_holder_always_wins() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        assert!((0..1000).all(|_| select_parent(&[10, 0, 0], &mut rng) == 0));
    }

    #[test]
    fn equal_tickets_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for tickets in [[5u32, 5], [0, 0]] {
            let first = (0..10_000).filter(|_| select_parent(&tickets, &mut rng) == 0).count();
            let share = first as f64 / 10_000.0;
            assert!((share - 0.5).abs() <= 0.02, "{tickets:?}: {share}");
        }
    }

    #[test]
    fn death_tie_goes_to_the_older_agent() {
        // both have fitness 3: 10 - 7 and 6 - 3
        let agents = vec![with_life(1, 18, 3), with_life(2, 70, 7), with_life(3, 500, 10)];
        assert_eq!(least_fit(&agents, 1), Some(1));
        let twins = vec![with_life(5, 18, 3), with_life(4, 18, 3)];
        assert_eq!(least_fit(&twins, 1), Some(1));
        // in weeks both have fitness 5: 7 - 14/7 and 6 - 7/7
        let agents = vec![with_life(1, 42, 7), with_life(2, 98, 14)];
        assert_eq!(least_fit(&agents, 7), Some(1));
    }

    #[test]
    fn newborns_are_exempt_from_death() {
        let agents = vec![with_life(1, 0, 0), with_life(2, 1000, 5)];
        assert_eq!(least_fit(&agents, 1), Some(1));
    }

    #[test]
    fn birth_and_death_keeps_size() {
        let env = unit_env();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut pop: Vec<Agent> = (0..50).map(|i| with_life(i, 10 * i, 3)).collect();
        let parent_hash = pop[49].genome_hash();
        let ev = birth_and_death(&mut pop, 49, AgentId(50), &env, &MutationOptions::default(), 1, &mut rng, 3);
        assert_eq!(pop.len(), 50);
        assert_eq!(ev.died, AgentId(0));
        assert_eq!(ev.parent, AgentId(49));
        let child = pop.last().unwrap();
        assert_eq!(child.id(), AgentId(50));
        assert_eq!(child.days_lived(), 0);
        assert_eq!(child.memome(), child.genome());
        assert_eq!(pop[48].genome_hash(), parent_hash);
    }
}

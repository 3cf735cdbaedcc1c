//! Social gatherings: who attends, what they pool and what they take home.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{Agent, AgentId};
use crate::engine::Treatment;
use crate::error::ConfigError;
use crate::plex::{FitnessKey, Plex, ELITE_COUNT};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GatheringConfig {
    /// Attendance probability per social-learning action, capped at one.
    pub kappa: f64,
    /// Fewer selected agents than this means no gathering takes place.
    pub min_participants: usize,
}

impl Default for GatheringConfig {
    fn default() -> Self {
        Self { kappa: 0.2, min_participants: 2 }
    }
}

impl GatheringConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.kappa > 0.0 && self.kappa <= 1.0) {
            return Err(ConfigError::invalid("kappa", format!("{} not in (0, 1]", self.kappa)));
        }
        if self.min_participants < 2 {
            return Err(ConfigError::invalid("min_participants", "must be at least 2"));
        }
        Ok(())
    }

    pub fn inclusion_probability(&self, social_actions: u32) -> f64 {
        (self.kappa * f64::from(social_actions)).min(1.0)
    }
}

/// Indices of agents attending today's gathering. Each agent is included
/// independently; an undersized selection, or a treatment without social
/// learning, yields nobody.
pub fn select_participants<R: Rng + ?Sized>(
    social_counts: &[u32],
    cfg: &GatheringConfig,
    treatment: Treatment,
    rng: &mut R,
) -> Vec<usize> {
    if !treatment.social_learning() {
        return Vec::new();
    }
    let mut chosen = Vec::new();
    for (i, &count) in social_counts.iter().enumerate() {
        if count == 0 {
            continue;
        }
        let p = cfg.inclusion_probability(count);
        if p >= 1.0 || rng.gen::<f64>() < p {
            chosen.push(i);
        }
    }
    if chosen.len() < cfg.min_participants {
        chosen.clear();
    }
    chosen
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatheringEvent {
    pub participants: Vec<AgentId>,
    /// Rewards of the redistributed memeplexes, fittest first.
    pub shared_rewards: Vec<u32>,
}

/// Pools each participant's five best memeplexes and hands the pool's five
/// best to every participant in place of its five least fit.
pub fn run_gathering(agents: &mut [Agent], participants: &[usize]) -> GatheringEvent {
    let mut pool: Vec<(FitnessKey, &Plex)> = Vec::with_capacity(participants.len() * ELITE_COUNT);
    for &i in participants {
        let memome = &agents[i].memome;
        let (best, _) = memome.extremes();
        pool.extend(best.iter().map(|&slot| (memome.get(slot).fitness(), memome.get(slot))));
    }
    // stable: equal keys keep contributor order
    pool.sort_by_key(|&(key, _)| std::cmp::Reverse(key));
    let shared: Vec<Plex> = pool.iter().take(ELITE_COUNT).map(|(_, p)| (*p).clone()).collect();
    for &i in participants {
        agents[i].memome.replace_worst(&shared);
    }
    GatheringEvent {
        participants: participants.iter().map(|&i| agents[i].id()).collect(),
        shared_rewards: shared.iter().map(Plex::reward).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plex::{MutationOptions, PlexSet, PLEXSET_SIZE};
    use crate::task::{Environment, RewardDistribution};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn env() -> Environment {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        Environment::generate(&mut rng, 50, &RewardDistribution::default()).unwrap()
    }

    fn evolved_agent(env: &Environment, id: u64, events: usize, seed: u64) -> Agent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut set = PlexSet::random_initial(env, &mut rng);
        for _ in 0..events {
            set.mutate(env, &MutationOptions::default(), &mut rng);
        }
        Agent::new(AgentId(id), set, 0)
    }

    #[test]
    fn no_social_learning_outside_full_treatment() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cfg = GatheringConfig::default();
        for t in [Treatment::NonLearning, Treatment::IndividualOnly] {
            assert!(select_participants(&[5; 50], &cfg, t, &mut rng).is_empty());
        }
        assert_eq!(select_participants(&[5; 50], &cfg, Treatment::Full, &mut rng).len(), 50);
    }

    #[test]
    fn probability_caps_at_one() {
        let cfg = GatheringConfig::default();
        assert_eq!(cfg.inclusion_probability(5), 1.0);
        assert_eq!(cfg.inclusion_probability(9), 1.0);
        assert_eq!(cfg.inclusion_probability(0), 0.0);
    }

    #[test]
    fn single_action_inclusion_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = GatheringConfig { kappa: 0.2, min_participants: 2 };
        // 10 x 1,000 agent-trials; a group this large never falls under the floor
        let counts = [1u32; 1_000];
        let included: usize =
            (0..10).map(|_| select_participants(&counts, &cfg, Treatment::Full, &mut rng).len()).sum();
        let rate = included as f64 / 10_000.0;
        assert!((rate - 0.2).abs() <= 0.01, "{rate}");
    }

    #[test]
    fn undersized_selection_cancels_gathering() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = GatheringConfig::default();
        let mut counts = [0u32; 50];
        counts[3] = 5;
        assert!(select_participants(&counts, &cfg, Treatment::Full, &mut rng).is_empty());
        counts[9] = 5;
        assert_eq!(select_participants(&counts, &cfg, Treatment::Full, &mut rng), vec![3, 9]);
    }

    #[test]
    fn dominant_contributor_spreads_its_best() {
        let env = env();
        let strong = evolved_agent(&env, 1, 400, 1);
        let weak = evolved_agent(&env, 2, 0, 2);
        let strong_top: Vec<Plex> = strong.memome().top(ELITE_COUNT).into_iter().cloned().collect();
        assert!(strong_top[4].fitness() > weak.memome().best().fitness());
        let mut agents = vec![strong.clone(), weak.clone()];
        let ev = run_gathering(&mut agents, &[0, 1]);
        assert_eq!(ev.shared_rewards, strong_top.iter().map(Plex::reward).collect::<Vec<_>>());
        for a in &agents {
            for p in &strong_top {
                assert!(a.memome().plexes().contains(p));
            }
        }
        assert_eq!(agents[1].memome().best().fitness(), strong.memome().best().fitness());
        assert_eq!(agents[0].memome().best(), strong.memome().best());
        assert_eq!(agents[1].genome(), weak.genome());
    }

    #[test]
    fn converged_participants_are_unchanged() {
        let env = env();
        let a = evolved_agent(&env, 1, 100, 3);
        let plex = a.memome().best().clone();
        let set = PlexSet::new(vec![plex; PLEXSET_SIZE]).unwrap();
        let mut agents = vec![Agent::new(AgentId(1), set.clone(), 0), Agent::new(AgentId(2), set.clone(), 0)];
        run_gathering(&mut agents, &[0, 1]);
        assert_eq!(agents[0].memome(), &set);
        assert_eq!(agents[1].memome(), &set);
    }

    #[test]
    fn only_worst_slots_are_overwritten() {
        let env = env();
        let mut agents: Vec<Agent> = (0..6).map(|i| evolved_agent(&env, i, 20 * i as usize, 40 + i)).collect();
        let before = agents.clone();
        let ranks: Vec<Vec<usize>> = before.iter().map(|a| a.memome().ranking()).collect();
        run_gathering(&mut agents, &[1, 3, 4]);
        for (i, (a, b)) in agents.iter().zip(&before).enumerate() {
            assert_eq!(a.genome(), b.genome());
            if ![1, 3, 4].contains(&i) {
                assert_eq!(a.memome(), b.memome());
                continue;
            }
            for &slot in &ranks[i][..PLEXSET_SIZE - ELITE_COUNT] {
                assert_eq!(a.memome().get(slot), b.memome().get(slot));
            }
            assert!(a.memome().best().fitness() >= b.memome().best().fitness());
        }
    }
}

//! The per-run day loop.
//!
//! Each simulated day runs, in this order:
//!
//! 1. every agent carries out its fittest memeplex;
//! 2. individual-learning mutations are applied to memomes;
//! 3. one social gathering (full-learning treatment only);
//! 4. births, each followed by the death of the least-fit pre-existing agent;
//! 5. a metrics sample when the day is a multiple of the sample interval.
//!
//! Day 0 is sampled before the first day runs.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::agent::{
    apply_individual_learning, least_fit, DEFAULT_AGE_UNIT_DAYS, population_hash, select_parent, spawn_child, Agent, AgentId,
    BirthEvent, DayOutcome,
};
use crate::error::ConfigError;
use crate::plex::{Action, MutationOptions, Plex, PlexSet};
use crate::social::{run_gathering, select_participants, GatheringConfig, GatheringEvent};
use crate::task::{Environment, RewardDistribution, SiteRecord, DAY_BUDGET};

/// Which learning channels actually do something.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Treatment {
    NonLearning,
    IndividualOnly,
    Full,
}

impl Treatment {
    pub const ALL: [Treatment; 3] = [Treatment::NonLearning, Treatment::IndividualOnly, Treatment::Full];

    pub fn individual_learning(self) -> bool {
        matches!(self, Treatment::IndividualOnly | Treatment::Full)
    }

    pub fn social_learning(self) -> bool {
        self == Treatment::Full
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Treatment::NonLearning => "non_learning",
            Treatment::IndividualOnly => "individual_only",
            Treatment::Full => "full",
        }
    }

    /// Stable numeric tag used in seed derivation.
    pub fn tag(self) -> u64 {
        match self {
            Treatment::NonLearning => 1,
            Treatment::IndividualOnly => 2,
            Treatment::Full => 3,
        }
    }
}

impl fmt::Display for Treatment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Treatment {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Treatment::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ConfigError::invalid("treatment", format!("unknown treatment {s:?}")))
    }
}

/// Everything that determines a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Seed for the environment stream; `None` derives it from `seed`.
    #[serde(default)]
    pub env_seed: Option<u64>,
    pub treatment: Treatment,
    pub days: u32,
    pub sample_interval: u32,
    pub population_size: usize,
    pub site_count: usize,
    pub reward_weights: RewardDistribution,
    pub gathering: GatheringConfig,
    pub births_per_day: usize,
    /// Days per unit of age in the death criterion.
    #[serde(default = "default_age_unit_days")]
    pub age_unit_days: u32,
    pub mutation: MutationOptions,
    /// Keep births, deaths and gatherings in the run record.
    #[serde(default)]
    pub log_events: bool,
    /// Keep the final genomes and memomes in the run record.
    #[serde(default)]
    pub record_population: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            env_seed: None,
            treatment: Treatment::Full,
            days: 10_000,
            sample_interval: 20,
            population_size: 50,
            site_count: 50,
            reward_weights: RewardDistribution::default(),
            gathering: GatheringConfig::default(),
            births_per_day: 1,
            age_unit_days: DEFAULT_AGE_UNIT_DAYS,
            mutation: MutationOptions::default(),
            log_events: false,
            record_population: false,
        }
    }
}

fn default_age_unit_days() -> u32 {
    DEFAULT_AGE_UNIT_DAYS
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.days == 0 {
            return Err(ConfigError::invalid("days", "must be positive"));
        }
        if self.sample_interval == 0 {
            return Err(ConfigError::invalid("sample_interval", "must be positive"));
        }
        if self.population_size < 2 {
            return Err(ConfigError::invalid("population_size", "must be at least 2"));
        }
        if self.births_per_day == 0 || self.births_per_day >= self.population_size {
            return Err(ConfigError::invalid(
                "births_per_day",
                format!("{} not in 1..{}", self.births_per_day, self.population_size),
            ));
        }
        if self.age_unit_days == 0 {
            return Err(ConfigError::invalid("age_unit_days", "must be positive"));
        }
        if self.site_count == 0 {
            return Err(ConfigError::invalid("site_count", "must be positive"));
        }
        if self.mutation.max_attempts == 0 {
            return Err(ConfigError::invalid("max_attempts", "must be positive"));
        }
        self.reward_weights.validate()?;
        self.gathering.validate()
    }

    pub fn environment_seed(&self) -> u64 {
        self.env_seed.unwrap_or(self.seed)
    }
}

/// Named random streams of one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Environment,
    InitialPopulation,
    Selection,
    Birth,
    Gathering,
    /// Individual learning of one agent.
    Agent(AgentId),
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::Environment => 0x656e_7669,
            Stream::InitialPopulation => 0x696e_6974,
            Stream::Selection => 0x7365_6c65,
            Stream::Birth => 0x6269_7274,
            Stream::Gathering => 0x6761_7468,
            Stream::Agent(_) => 0x6167_656e,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Order-sensitive combination of words into one seed.
pub fn derive_seed(words: &[u64]) -> u64 {
    words.iter().fold(0x6a09_e667_f3bc_c909, |acc, &w| mix64(acc ^ mix64(w)))
}

/// Derives the independent generators of a run from its seeds.
#[derive(Debug, Clone, Copy)]
pub struct RngHierarchy {
    seed: u64,
    env_seed: u64,
}

impl RngHierarchy {
    pub fn new(seed: u64, env_seed: u64) -> Self {
        Self { seed, env_seed }
    }

    pub fn for_config(cfg: &RunConfig) -> Self {
        Self::new(cfg.seed, cfg.environment_seed())
    }

    pub fn stream(&self, stream: Stream) -> ChaCha8Rng {
        let key = match stream {
            Stream::Environment => derive_seed(&[self.env_seed, stream.tag()]),
            Stream::Agent(id) => derive_seed(&[self.seed, stream.tag(), id.0]),
            _ => derive_seed(&[self.seed, stream.tag()]),
        };
        ChaCha8Rng::seed_from_u64(key)
    }
}

/// One metrics record. Counts refer to each agent's fittest memeplex and
/// fittest geneplex, averaged over agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub day: u32,
    pub mean_best_meme_fitness: f64,
    pub max_best_meme_fitness: f64,
    pub mean_best_gene_fitness: f64,
    pub max_best_gene_fitness: f64,
    pub meme_reproduce: f64,
    pub meme_learn_ind: f64,
    pub meme_learn_soc: f64,
    pub gene_reproduce: f64,
    pub gene_learn_ind: f64,
    pub gene_learn_soc: f64,
    /// Number of distinct fittest memeplexes in the population.
    pub meme_diversity: f64,
}

/// Metric column names, in table order.
pub const METRICS: [&str; 11] = [
    "mean_best_meme_fitness",
    "max_best_meme_fitness",
    "mean_best_gene_fitness",
    "max_best_gene_fitness",
    "meme_reproduce",
    "meme_learn_ind",
    "meme_learn_soc",
    "gene_reproduce",
    "gene_learn_ind",
    "gene_learn_soc",
    "meme_diversity",
];

impl SampleRow {
    pub fn metrics(&self) -> [f64; 11] {
        [
            self.mean_best_meme_fitness,
            self.max_best_meme_fitness,
            self.mean_best_gene_fitness,
            self.max_best_gene_fitness,
            self.meme_reproduce,
            self.meme_learn_ind,
            self.meme_learn_soc,
            self.gene_reproduce,
            self.gene_learn_ind,
            self.gene_learn_soc,
            self.meme_diversity,
        ]
    }

    pub fn from_metrics(day: u32, m: [f64; 11]) -> Self {
        Self {
            day,
            mean_best_meme_fitness: m[0],
            max_best_meme_fitness: m[1],
            mean_best_gene_fitness: m[2],
            max_best_gene_fitness: m[3],
            meme_reproduce: m[4],
            meme_learn_ind: m[5],
            meme_learn_soc: m[6],
            gene_reproduce: m[7],
            gene_learn_ind: m[8],
            gene_learn_soc: m[9],
            meme_diversity: m[10],
        }
    }

    /// Value of the metric named `name`.
    pub fn metric(&self, name: &str) -> Option<f64> {
        METRICS.iter().position(|m| *m == name).map(|i| self.metrics()[i])
    }
}

/// Summarizes the population on `day`.
pub fn sample_metrics(agents: &[Agent], day: u32) -> SampleRow {
    let n = agents.len() as f64;
    let mut m = [0.0f64; 11];
    let mut max_meme = 0u32;
    let mut max_gene = 0u32;
    let mut distinct: HashMap<&Plex, usize> = HashMap::new();
    for a in agents {
        let meme = a.memome().best();
        let gene = a.genome().best();
        m[0] += f64::from(meme.reward());
        m[2] += f64::from(gene.reward());
        max_meme = max_meme.max(meme.reward());
        max_gene = max_gene.max(gene.reward());
        let (mc, gc) = (meme.counts(), gene.counts());
        m[4] += f64::from(mc.reproduce);
        m[5] += f64::from(mc.learn_individual);
        m[6] += f64::from(mc.learn_social);
        m[7] += f64::from(gc.reproduce);
        m[8] += f64::from(gc.learn_individual);
        m[9] += f64::from(gc.learn_social);
        *distinct.entry(meme).or_default() += 1;
    }
    for i in [0, 2, 4, 5, 6, 7, 8, 9] {
        m[i] /= n;
    }
    m[1] = f64::from(max_meme);
    m[3] = f64::from(max_gene);
    m[10] = distinct.len() as f64;
    SampleRow::from_metrics(day, m)
}

/// Largest fraction of agents whose fittest memeplexes are identical.
pub fn modal_meme_share(agents: &[Agent]) -> f64 {
    let mut distinct: HashMap<&Plex, usize> = HashMap::new();
    for a in agents {
        *distinct.entry(a.memome().best()).or_default() += 1;
    }
    distinct.values().copied().max().unwrap_or(0) as f64 / agents.len().max(1) as f64
}

/// What happened on one day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayEvents {
    pub day: u32,
    pub births: Vec<BirthEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gathering: Option<GatheringEvent>,
}

/// Full result of stepping one day, including each agent's outcome.
#[derive(Debug, Clone)]
pub struct DayReport {
    pub events: DayEvents,
    /// `(agent, outcome)` for every agent alive at the start of the day.
    pub outcomes: Vec<(AgentId, DayOutcome)>,
    pub sample: Option<SampleRow>,
}

/// Snapshot of one agent for the run record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: AgentId,
    pub birth_day: u32,
    pub cumulative_reward: u64,
    pub days_lived: u32,
    pub genome: Vec<Vec<Action>>,
    pub memome: Vec<Vec<Action>>,
}

impl AgentRecord {
    pub fn from_agent(a: &Agent) -> Self {
        let dump = |s: &PlexSet| s.plexes().iter().map(|p| p.actions().to_vec()).collect();
        Self {
            id: a.id(),
            birth_day: a.birth_day(),
            cumulative_reward: a.cumulative_reward(),
            days_lived: a.days_lived(),
            genome: dump(a.genome()),
            memome: dump(a.memome()),
        }
    }

    pub fn to_agent(&self, env: &Environment) -> Result<Agent, ConfigError> {
        let load = |plexes: &[Vec<Action>]| -> Result<PlexSet, ConfigError> {
            PlexSet::new(plexes.iter().map(|p| Plex::new(p.clone(), env)).collect::<Result<_, _>>()?)
        };
        Ok(Agent::restore(
            self.id,
            load(&self.genome)?,
            load(&self.memome)?,
            self.birth_day,
            self.cumulative_reward,
            self.days_lived,
        ))
    }
}

pub const RUN_RECORD_VERSION: u32 = 1;

/// Self-contained account of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub format_version: u32,
    /// Position of this run within an experiment.
    #[serde(default)]
    pub run: usize,
    pub config: RunConfig,
    pub environment: Vec<SiteRecord>,
    pub samples: Vec<SampleRow>,
    pub final_population_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub events: Option<Vec<DayEvents>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_population: Option<Vec<AgentRecord>>,
}

impl RunRecord {
    pub fn treatment(&self) -> Treatment {
        self.config.treatment
    }

    /// Re-runs the recorded configuration and reports whether it lands on
    /// the recorded final population.
    pub fn replay_matches(&self) -> Result<bool, ConfigError> {
        let replayed = run_simulation(&self.config, |_| {})?;
        Ok(replayed.final_population_hash == self.final_population_hash
            && replayed.samples == self.samples
            && replayed.environment == self.environment)
    }

    /// Hash of the stored population snapshot, if one was recorded.
    pub fn snapshot_hash(&self) -> Result<Option<String>, ConfigError> {
        let Some(pop) = &self.final_population else { return Ok(None) };
        let env = Environment::from_records(&self.environment)?;
        let agents = pop.iter().map(|a| a.to_agent(&env)).collect::<Result<Vec<_>, _>>()?;
        Ok(Some(population_hash(&agents)))
    }
}

/// A run in progress. Owns its population and all random streams.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: RunConfig,
    env: Environment,
    rngs: RngHierarchy,
    agents: Vec<Agent>,
    learn_rngs: Vec<ChaCha8Rng>,
    selection_rng: ChaCha8Rng,
    birth_rng: ChaCha8Rng,
    gathering_rng: ChaCha8Rng,
    day: u32,
    next_id: u64,
}

impl Simulation {
    pub fn new(config: RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let rngs = RngHierarchy::for_config(&config);
        let env = Environment::generate(
            &mut rngs.stream(Stream::Environment),
            config.site_count,
            &config.reward_weights,
        )?;
        let mut init = rngs.stream(Stream::InitialPopulation);
        let agents: Vec<Agent> = (0..config.population_size as u64)
            .map(|i| Agent::new(AgentId(i), PlexSet::random_initial(&env, &mut init), 0))
            .collect();
        let learn_rngs = agents.iter().map(|a| rngs.stream(Stream::Agent(a.id()))).collect();
        Ok(Self {
            selection_rng: rngs.stream(Stream::Selection),
            birth_rng: rngs.stream(Stream::Birth),
            gathering_rng: rngs.stream(Stream::Gathering),
            next_id: config.population_size as u64,
            config,
            env,
            rngs,
            agents,
            learn_rngs,
            day: 0,
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn environment(&self) -> &Environment {
        &self.env
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    /// Last completed day; 0 before the first step.
    pub fn day(&self) -> u32 {
        self.day
    }

    pub fn is_finished(&self) -> bool {
        self.day >= self.config.days
    }

    pub fn sample(&self) -> SampleRow {
        sample_metrics(&self.agents, self.day)
    }

    pub fn population_hash(&self) -> String {
        population_hash(&self.agents)
    }

    pub fn step(&mut self) -> DayReport {
        self.day += 1;
        let day = self.day;
        let treatment = self.config.treatment;

        let outcomes: Vec<DayOutcome> = self.agents.iter_mut().map(Agent::execute_day).collect();
        let report_outcomes = self.agents.iter().map(Agent::id).zip(outcomes.iter().copied()).collect();

        for ((agent, outcome), rng) in self.agents.iter_mut().zip(&outcomes).zip(&mut self.learn_rngs) {
            apply_individual_learning(agent, outcome, &self.env, treatment, &self.config.mutation, rng);
        }

        let mut gathering = None;
        if treatment.social_learning() {
            let counts: Vec<u32> = outcomes.iter().map(|o| o.learn_social_count).collect();
            let chosen = select_participants(&counts, &self.config.gathering, treatment, &mut self.gathering_rng);
            if !chosen.is_empty() {
                gathering = Some(run_gathering(&mut self.agents, &chosen));
            }
        }

        let tickets: Vec<u32> = outcomes.iter().map(|o| o.breeding_tickets).collect();
        let parents: Vec<usize> =
            (0..self.config.births_per_day).map(|_| select_parent(&tickets, &mut self.selection_rng)).collect();
        let mut children = Vec::with_capacity(parents.len());
        let mut births = Vec::with_capacity(parents.len());
        for &p in &parents {
            let id = AgentId(self.next_id);
            self.next_id += 1;
            let parent = &self.agents[p];
            children.push(spawn_child(parent, id, day, &self.env, &self.config.mutation, &mut self.birth_rng));
            births.push(BirthEvent { parent: parent.id(), child: id, died: AgentId(u64::MAX) });
        }
        for birth in &mut births {
            let dead = least_fit(&self.agents, self.config.age_unit_days).expect("pre-existing agents have lived a day");
            birth.died = self.agents.remove(dead).id();
            self.learn_rngs.remove(dead);
        }
        for child in children {
            self.learn_rngs.push(self.rngs.stream(Stream::Agent(child.id())));
            self.agents.push(child);
        }

        let sample = day.is_multiple_of(self.config.sample_interval).then(|| self.sample());
        DayReport { events: DayEvents { day, births, gathering }, outcomes: report_outcomes, sample }
    }

    /// Steps to the configured last day, feeding each sample to `sink`.
    pub fn run<F: FnMut(&SampleRow)>(mut self, mut sink: F) -> RunRecord {
        let first = self.sample();
        sink(&first);
        let mut samples = vec![first];
        let mut events = self.config.log_events.then(Vec::new);
        while !self.is_finished() {
            let report = self.step();
            if let Some(s) = report.sample {
                sink(&s);
                samples.push(s);
            }
            if let Some(log) = events.as_mut() {
                log.push(report.events);
            }
        }
        RunRecord {
            format_version: RUN_RECORD_VERSION,
            run: 0,
            environment: self.env.records(),
            samples,
            final_population_hash: self.population_hash(),
            events,
            final_population: self
                .config
                .record_population
                .then(|| self.agents.iter().map(AgentRecord::from_agent).collect()),
            config: self.config,
        }
    }
}

/// Runs `config` from day 0 to its last day. `progress` sees every sample
/// as it is taken.
pub fn run_simulation<F: FnMut(&SampleRow)>(config: &RunConfig, progress: F) -> Result<RunRecord, ConfigError> {
    Ok(Simulation::new(config.clone())?.run(progress))
}

/// Upper bound on any plex reward.
pub const MAX_FITNESS: f64 = DAY_BUDGET as f64;

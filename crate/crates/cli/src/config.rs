//! Experiment configuration: the TOML file, flag overrides, and validation
//! into a [`Plan`] that every subcommand consumes.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tempering_core::analysis::{SpectralMethod, ThresholdFamily};
use tempering_core::lumped::{reference_lambda_min, DEFAULT_CHAIN_CAP};
use tempering_core::mc::Start;
use tempering_core::models::{
    ising_critical_beta, make_ladder, potts_critical_beta, ExpModel, Ladder, LadderKind, Model, PottsModel, Restriction,
};

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub model: ModelBlock,
    #[serde(default)]
    pub ladder: LadderBlock,
    #[serde(default)]
    pub chain: ChainBlock,
    #[serde(default)]
    pub analysis: AnalysisBlock,
    #[serde(default)]
    pub simulate: SimulateBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Potts,
    Ising,
    Exp,
}

/// `n = 12`, `n = [8, 12]`, or `n = { start = 8, end = 24, step = 4 }`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Grid {
    One(u32),
    List(Vec<u32>),
    Range { start: u32, end: u32, step: Option<u32> },
}

impl Grid {
    fn values(&self) -> Result<Vec<u32>, String> {
        match self {
            Grid::One(n) => Ok(vec![*n]),
            Grid::List(v) if v.is_empty() => Err("the grid is empty".into()),
            Grid::List(v) => Ok(v.clone()),
            Grid::Range { start, end, step } => {
                let step = step.unwrap_or(1);
                if step == 0 || end < start {
                    return Err(format!("bad range {start}..={end} step {step}"));
                }
                Ok((*start..=*end).step_by(step as usize).collect())
            }
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub family: Option<Family>,
    pub q: Option<usize>,
    pub n: Option<Grid>,
    /// `β = μ/n`.
    pub mu: Option<f64>,
    pub beta: Option<f64>,
    /// `β = factor · β_c(n)`.
    pub beta_critical_multiple: Option<f64>,
    /// Field on color 0.
    pub h: Option<f64>,
    pub fields: Option<Vec<f64>>,
    /// Exponential family base `C`.
    pub c: Option<f64>,
    /// Exponential family range `[-n_neg, n_pos]`; both default to `n`.
    pub n_neg: Option<u32>,
    pub n_pos: Option<u32>,
}

/// `m = 4` or `m = "n"`.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Levels {
    Fixed(usize),
    Named(String),
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LadderBlock {
    pub m: Option<Levels>,
    pub kind: Option<LadderKind>,
    pub kinds: Option<Vec<LadderKind>>,
    pub schedule: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ChainKind {
    Level,
    Tempering,
    Swap,
    Trace,
    Flattened,
}

impl ChainKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ChainKind::Level => "level",
            ChainKind::Tempering => "tempering",
            ChainKind::Swap => "swap",
            ChainKind::Trace => "trace",
            ChainKind::Flattened => "flattened",
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ChainBlock {
    pub kind: Option<ChainKind>,
    pub restriction: Option<Restriction>,
    /// Level of a `level` chain; defaults to the top level.
    pub level: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// Best `{σ_1 < t}` (or `{x < t}`, trace weight) over `t`.
    Threshold,
    /// Best `{max_m σ_m < t}` over `t`.
    MaxCount,
    /// `{σ_1 ≤ t_min}` at the bottleneck of the balanced-minority line.
    LambdaMin,
    /// `{all σ_m ≤ n/2}`.
    NoMajority,
}

impl CutKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            CutKind::Threshold => "threshold",
            CutKind::MaxCount => "max_count",
            CutKind::LambdaMin => "lambda_min",
            CutKind::NoMajority => "no_majority",
        }
    }

    pub fn family(&self) -> Option<ThresholdFamily> {
        match self {
            CutKind::Threshold => Some(ThresholdFamily::Coordinate),
            CutKind::MaxCount => Some(ThresholdFamily::MaxCount),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisBlock {
    pub epsilon: Option<f64>,
    pub method: Option<Method>,
    pub tolerance: Option<f64>,
    pub state_cap: Option<usize>,
    pub cut: Option<CutKind>,
    /// Also compute the exact `τ(ε)` on chains small enough for it.
    pub tv: Option<bool>,
    /// Include class distributions in `ladder-info`.
    pub distributions: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SimKind {
    Metropolis,
    Tempering,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum StartKind {
    Random,
    Disordered,
    Ordered,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub kind: Option<SimKind>,
    pub level: Option<usize>,
    pub steps: Option<u64>,
    pub burn_in: Option<u64>,
    pub stride: Option<u64>,
    pub start: Option<StartKind>,
    pub color: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub path: Option<PathBuf>,
    pub format: Option<Format>,
    pub timestamp: Option<bool>,
    /// Directory for sparse triplet dumps of every built chain.
    pub dump_dir: Option<PathBuf>,
    /// Histogram CSV written by `simulate`.
    pub histogram: Option<PathBuf>,
}

/// Values given on the command line; each one wins over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub no_timestamp: bool,
    pub strict: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub field: String,
    pub message: String,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigErrors(pub Vec<Issue>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{}: {}", e.field, e.message)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    ScanGap,
    ScanConductance,
    CompareRgb,
    Simulate,
    LadderInfo,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::ScanGap => "scan-gap",
            Command::ScanConductance => "scan-conductance",
            Command::CompareRgb => "compare-rgb",
            Command::Simulate => "simulate",
            Command::LadderInfo => "ladder-info",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaRule {
    Mu(f64),
    Fixed(f64),
    CriticalMultiple(f64),
}

/// A validated experiment.
#[derive(Debug, Clone)]
pub struct Plan {
    pub command: Command,
    pub family: Family,
    pub q: usize,
    pub ns: Vec<u32>,
    pub beta: BetaRule,
    pub fields: Vec<f64>,
    pub c: f64,
    pub n_neg: Option<u32>,
    pub n_pos: Option<u32>,
    pub m: Levels,
    pub kinds: Vec<LadderKind>,
    pub schedule: Option<Vec<f64>>,
    pub chain: ChainKind,
    pub restriction: Restriction,
    pub level: Option<usize>,
    pub epsilon: f64,
    pub method: SpectralMethod,
    pub tolerance: f64,
    pub state_cap: usize,
    pub cut: CutKind,
    pub tv: bool,
    pub distributions: bool,
    pub sim_kind: SimKind,
    pub sim_level: Option<usize>,
    pub steps: u64,
    pub burn_in: u64,
    pub stride: u64,
    pub start: StartKind,
    pub color: usize,
    pub seed: u64,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub timestamp: bool,
    pub strict: bool,
    pub dump_dir: Option<PathBuf>,
    pub histogram: Option<PathBuf>,
    /// The merged configuration, echoed into JSON reports.
    pub echo: FileConfig,
}

pub const DEFAULT_MU: f64 = 2.9;
pub const DEFAULT_SEED: u64 = 1;

impl Plan {
    pub fn beta_at(&self, n: u32) -> f64 {
        match self.beta {
            BetaRule::Mu(mu) => mu / n as f64,
            BetaRule::Fixed(b) => b,
            BetaRule::CriticalMultiple(f) => match self.family {
                Family::Ising => f * ising_critical_beta(n),
                _ => f * potts_critical_beta(n),
            },
        }
    }

    pub fn mu_at(&self, n: u32) -> f64 {
        match self.beta {
            BetaRule::Mu(mu) => mu,
            _ => self.beta_at(n) * n as f64,
        }
    }

    pub fn m_at(&self, n: u32) -> usize {
        match &self.m {
            Levels::Fixed(m) => *m,
            Levels::Named(_) => n as usize,
        }
    }

    pub fn model_at(&self, n: u32) -> tempering_core::Result<Model> {
        Ok(match self.family {
            Family::Exp => Model::Exp(ExpModel::new(self.c, self.n_neg.unwrap_or(n), self.n_pos.unwrap_or(n))?),
            Family::Ising | Family::Potts => {
                Model::Potts(PottsModel::with_fields(self.q, n, self.beta_at(n), self.fields.clone())?)
            }
        })
    }

    pub fn potts_at(&self, n: u32) -> tempering_core::Result<PottsModel> {
        PottsModel::with_fields(self.q, n, self.beta_at(n), self.fields.clone())
    }

    pub fn ladder_at(&self, n: u32, kind: LadderKind) -> tempering_core::Result<Ladder> {
        make_ladder(self.model_at(n)?, self.m_at(n), kind, self.schedule.clone())
    }
}

pub fn read_file(path: &Path) -> Result<FileConfig, ConfigErrors> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        ConfigErrors(vec![Issue { field: "config".into(), message: format!("cannot read {}: {e}", path.display()) }])
    })?;
    parse(&text)
}

pub fn parse(text: &str) -> Result<FileConfig, ConfigErrors> {
    toml::from_str(text).map_err(|e| {
        ConfigErrors(vec![Issue { field: "config".into(), message: e.to_string().trim().replace('\n', " ") }])
    })
}

struct Collector(Vec<Issue>);

impl Collector {
    fn push(&mut self, field: &str, message: impl Into<String>) {
        self.0.push(Issue { field: field.into(), message: message.into() });
    }
}

/// Merges flags into the file values, fills defaults and checks every
/// field against what `command` needs. All problems are reported at once.
pub fn resolve(command: Command, mut file: FileConfig, flags: &Overrides) -> Result<Plan, ConfigErrors> {
    let mut errs = Collector(Vec::new());
    if flags.out.is_some() {
        file.output.path = flags.out.clone();
    }
    if flags.format.is_some() {
        file.output.format = flags.format;
    }
    if flags.seed.is_some() {
        file.seed = flags.seed;
    }
    if flags.threads.is_some() {
        file.threads = flags.threads;
    }
    if flags.no_timestamp {
        file.output.timestamp = Some(false);
    }

    let mb = &file.model;
    let family = mb.family.unwrap_or(Family::Potts);
    let q = match (family, mb.q) {
        (Family::Ising, Some(q)) if q != 2 => {
            errs.push("model.q", "the ising family has q = 2");
            2
        }
        (Family::Ising, _) => 2,
        (Family::Exp, _) => 0,
        (Family::Potts, Some(q)) if q < 2 => {
            errs.push("model.q", "q must be at least 2");
            3
        }
        (Family::Potts, q) => q.unwrap_or(3),
    };

    let ns = match &mb.n {
        None if family == Family::Exp && mb.n_neg.is_some() && mb.n_pos.is_some() => vec![0],
        None => {
            errs.push("model.n", "missing; give a size, a list, or {start, end, step}");
            Vec::new()
        }
        Some(g) => g.values().unwrap_or_else(|e| {
            errs.push("model.n", e);
            Vec::new()
        }),
    };
    if family != Family::Exp && ns.contains(&0) {
        errs.push("model.n", "sizes must be positive");
    }

    let given = [mb.mu.is_some(), mb.beta.is_some(), mb.beta_critical_multiple.is_some()];
    if given.iter().filter(|g| **g).count() > 1 {
        errs.push("model", "give at most one of mu, beta, beta_critical_multiple");
    }
    let beta = if let Some(b) = mb.beta {
        BetaRule::Fixed(b)
    } else if let Some(f) = mb.beta_critical_multiple {
        BetaRule::CriticalMultiple(f)
    } else {
        BetaRule::Mu(mb.mu.unwrap_or(DEFAULT_MU))
    };
    let bad_beta = match beta {
        BetaRule::Mu(x) | BetaRule::Fixed(x) | BetaRule::CriticalMultiple(x) => !x.is_finite() || x < 0.0,
    };
    if bad_beta && family != Family::Exp {
        errs.push("model", "the inverse temperature must be finite and non-negative");
    }

    let fields = match (&mb.fields, mb.h) {
        (Some(_), Some(_)) => {
            errs.push("model", "give either h or fields, not both");
            vec![0.0; q.max(1)]
        }
        (Some(f), None) => {
            if f.len() != q {
                errs.push("model.fields", format!("expected {q} entries, got {}", f.len()));
            }
            f.clone()
        }
        (None, h) => {
            let mut f = vec![0.0; q.max(1)];
            f[0] = h.unwrap_or(0.0);
            f
        }
    };
    if family == Family::Exp && (mb.h.is_some() || mb.fields.is_some() || mb.q.is_some()) {
        errs.push("model", "q, h and fields do not apply to the exp family");
    }
    if family != Family::Exp && (mb.c.is_some() || mb.n_neg.is_some() || mb.n_pos.is_some()) {
        errs.push("model", "c, n_neg and n_pos apply only to the exp family");
    }

    let lb = &file.ladder;
    let m = lb.m.clone().unwrap_or(Levels::Named("n".into()));
    if let Levels::Named(s) = &m {
        if s != "n" {
            errs.push("ladder.m", format!("expected an integer or \"n\", got {s:?}"));
        }
    }
    if matches!(m, Levels::Named(_)) && ns == [0] {
        errs.push("ladder.m", "m = \"n\" needs model.n");
    }
    let kinds = match (&lb.kind, &lb.kinds) {
        (Some(_), Some(_)) => {
            errs.push("ladder", "give either kind or kinds, not both");
            vec![LadderKind::Tempered]
        }
        (Some(k), None) => vec![*k],
        (None, Some(ks)) if ks.is_empty() => {
            errs.push("ladder.kinds", "empty list");
            vec![LadderKind::Tempered]
        }
        (None, Some(ks)) => ks.clone(),
        (None, None) => vec![LadderKind::Tempered],
    };

    let cb = &file.chain;
    let chain = cb.kind.unwrap_or(ChainKind::Tempering);
    let restriction = cb.restriction.unwrap_or_default();
    if restriction == Restriction::Rgb {
        if family != Family::Potts || q != 3 {
            errs.push("chain.restriction", "rgb needs the 3-state Potts family");
        }
        if fields.iter().any(|h| *h != fields[0]) {
            errs.push("chain.restriction", "rgb needs equal fields on every color");
        }
    }
    if chain == ChainKind::Flattened && (family != Family::Potts || q != 3) {
        errs.push("chain.kind", "flattened chains need the 3-state Potts family");
    }

    let ab = &file.analysis;
    let epsilon = ab.epsilon.unwrap_or(0.125);
    if !(epsilon > 0.0 && epsilon < 0.5) {
        errs.push("analysis.epsilon", "must lie in (0, 1/2)");
    }
    let tolerance = ab.tolerance.unwrap_or(1e-10);
    if tolerance.is_nan() || tolerance <= 0.0 {
        errs.push("analysis.tolerance", "must be positive");
    }
    let state_cap = ab.state_cap.unwrap_or(DEFAULT_CHAIN_CAP);
    if state_cap == 0 {
        errs.push("analysis.state_cap", "must be positive");
    }
    let method = match ab.method.unwrap_or(Method::Auto) {
        Method::Auto => SpectralMethod::Auto,
        Method::Dense => SpectralMethod::Dense,
        Method::Iterative => SpectralMethod::Iterative,
    };
    let cut = ab.cut.unwrap_or(CutKind::Threshold);

    let sb = &file.simulate;
    let steps = sb.steps.unwrap_or(100_000);
    let burn_in = sb.burn_in.unwrap_or(steps / 10);
    let stride = sb.stride.unwrap_or(1);
    if command == Command::Simulate {
        if steps <= burn_in {
            errs.push("simulate.steps", "must exceed burn_in");
        }
        if stride == 0 {
            errs.push("simulate.stride", "must be at least 1");
        }
        if family == Family::Exp {
            errs.push("model.family", "simulate runs Potts or Ising chains");
        }
        if ns.len() > 1 {
            errs.push("model.n", "simulate takes a single size");
        }
    }

    let ob = &file.output;
    let format = ob.format.unwrap_or(match command {
        Command::Simulate | Command::LadderInfo => Format::Json,
        _ => Format::Csv,
    });
    if file.threads == Some(0) {
        errs.push("threads", "must be at least 1");
    }

    // Command-specific needs.
    let potts3 = family == Family::Potts && q == 3;
    match command {
        Command::Verify | Command::CompareRgb => {
            if !potts3 {
                errs.push("model.family", format!("{} studies the 3-state Potts model", command.name()));
            }
            for &n in &ns {
                if n % 12 != 0 {
                    errs.push("model.n", format!("n = {n} is not a multiple of 12"));
                }
            }
            if !matches!(beta, BetaRule::Mu(_)) {
                errs.push("model", format!("{} takes mu (beta = mu/n)", command.name()));
            }
            if fields.iter().any(|h| *h != 0.0) {
                errs.push("model", format!("{} is field-free", command.name()));
            }
            if let BetaRule::Mu(mu) = beta {
                if potts3 && mu.is_finite() {
                    if let Err(e) = reference_lambda_min(mu) {
                        errs.push("model.mu", e.to_string());
                    }
                }
            }
        }
        Command::ScanConductance if cut == CutKind::LambdaMin || cut == CutKind::NoMajority => {
            if !potts3 {
                errs.push("analysis.cut", format!("{} cuts need the 3-state Potts family", cut.as_str()));
            }
            if cut == CutKind::LambdaMin {
                for &n in &ns {
                    if n % 12 != 0 {
                        errs.push("model.n", format!("n = {n} is not a multiple of 12"));
                    }
                }
                match beta {
                    BetaRule::Mu(mu) if potts3 => {
                        if let Err(e) = reference_lambda_min(mu) {
                            errs.push("model.mu", e.to_string());
                        }
                    }
                    BetaRule::Mu(_) => {}
                    _ => errs.push("model", "the lambda_min cut takes mu (beta = mu/n)"),
                }
            }
        }
        _ => {}
    }

    // Model and ladder constructors are cheap; run them to surface their
    // own parameter checks.
    let mut plan = Plan {
        command,
        family,
        q,
        ns: ns.clone(),
        beta,
        fields,
        c: mb.c.unwrap_or(2.0),
        n_neg: mb.n_neg,
        n_pos: mb.n_pos,
        m,
        kinds,
        schedule: lb.schedule.clone(),
        chain,
        restriction,
        level: cb.level,
        epsilon,
        method,
        tolerance,
        state_cap,
        cut,
        tv: ab.tv.unwrap_or(false),
        distributions: ab.distributions.unwrap_or(false),
        sim_kind: sb.kind.unwrap_or(SimKind::Metropolis),
        sim_level: sb.level,
        steps,
        burn_in,
        stride,
        start: sb.start.unwrap_or(StartKind::Random),
        color: sb.color.unwrap_or(0),
        seed: file.seed.unwrap_or(DEFAULT_SEED),
        threads: file.threads,
        out: ob.path.clone(),
        format,
        timestamp: ob.timestamp.unwrap_or(true),
        strict: flags.strict,
        dump_dir: ob.dump_dir.clone(),
        histogram: ob.histogram.clone(),
        echo: FileConfig::default(),
    };
    if errs.0.is_empty() {
        for &n in &ns {
            for &kind in &plan.kinds {
                if let Err(e) = plan.ladder_at(n, kind) {
                    errs.push("model", format!("n = {n}: {e}"));
                    break;
                }
            }
            if let Some(level) = plan.level.or(plan.sim_level) {
                if level > plan.m_at(n) {
                    errs.push("level", format!("level {level} exceeds M = {} at n = {n}", plan.m_at(n)));
                }
            }
        }
    }
    if !errs.0.is_empty() {
        return Err(ConfigErrors(errs.0));
    }
    plan.echo = file;
    Ok(plan)
}

impl Plan {
    pub fn start(&self) -> Start {
        match self.start {
            StartKind::Random => Start::Random,
            StartKind::Disordered => Start::Disordered,
            StartKind::Ordered => Start::Ordered(self.color),
        }
    }
}

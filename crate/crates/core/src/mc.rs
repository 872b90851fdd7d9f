//! Monte Carlo runs of the level, tempering and swapping chains on explicit
//! configurations.
//!
//! Proposals follow the lumped builders exactly: a level move picks a vertex
//! then a color; tempering flips a fair coin between a level move and a
//! temperature move; swapping picks a level move with probability 1/2
//! (uniform level) and otherwise an adjacent swap (uniform pair).

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::ser::SerializeSeq;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::models::{log_multinomial_counts, Ladder, PottsModel, Restriction, Sigma};

pub const GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9, seed_from_u64)";

/// Steps between full recounts of the cached color counts.
pub const RECOUNT_INTERVAL: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpinConfig {
    spins: Vec<u32>,
}

impl SpinConfig {
    pub fn new(spins: Vec<u32>, q: usize) -> Result<Self> {
        if spins.is_empty() {
            return Err(Error::InvalidParameter("a configuration needs at least one vertex".into()));
        }
        if let Some(&c) = spins.iter().find(|&&c| c as usize >= q) {
            return Err(Error::InvalidParameter(format!("color {c} outside 0..{q}")));
        }
        Ok(SpinConfig { spins })
    }

    pub fn spins(&self) -> &[u32] {
        &self.spins
    }

    pub fn counts(&self, q: usize) -> Vec<u32> {
        let mut c = vec![0u32; q];
        for &s in &self.spins {
            c[s as usize] += 1;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum McKind {
    /// Single-vertex Metropolis at a fixed level.
    Metropolis {
        level: usize,
    },
    Tempering,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Vertex `v` gets color `v mod q`.
    Disordered,
    /// Every vertex gets the given color.
    Ordered(usize),
    /// Independent uniform colors; relabelled by decreasing count under RGB.
    Random,
}

#[derive(Debug, Clone)]
pub struct McState {
    pub kind: McKind,
    pub restriction: Restriction,
    configs: Vec<SpinConfig>,
    counts: Vec<Vec<u32>>,
    level: usize,
    rng: ChaCha8Rng,
    seed: u64,
    q: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveType {
    /// Proposed the current color of the chosen vertex.
    SameColor,
    Level,
    Temperature,
    /// Temperature proposal beyond the ladder ends.
    OutOfRange,
    Swap,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MoveRecord {
    pub move_type: MoveType,
    /// Level of the move; for a swap the lower of the two levels.
    pub level: usize,
    pub acceptance: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MoveCounter {
    pub proposed: u64,
    pub accepted: u64,
    /// Sum of the acceptance probabilities of the proposals.
    pub sum_acceptance: f64,
    /// Sum of `p (1 - p)`; the variance of the accepted count given the
    /// proposals.
    pub sum_variance: f64,
}

impl MoveCounter {
    fn record(&mut self, p: f64, accepted: bool) {
        self.proposed += 1;
        self.accepted += accepted as u64;
        self.sum_acceptance += p;
        self.sum_variance += p * (1.0 - p);
    }

    fn merge(&mut self, other: &MoveCounter) {
        self.proposed += other.proposed;
        self.accepted += other.accepted;
        self.sum_acceptance += other.sum_acceptance;
        self.sum_variance += other.sum_variance;
    }

    /// `(accepted − Σp) / sqrt(Σp(1−p))`; zero when there is no variance.
    pub fn z_score(&self) -> f64 {
        let d = self.accepted as f64 - self.sum_acceptance;
        if self.sum_variance > 0.0 {
            d / self.sum_variance.sqrt()
        } else if d.abs() < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Class counts seen at one level.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Histogram(pub BTreeMap<Sigma, u64>);

impl Histogram {
    pub fn total(&self) -> u64 {
        self.0.values().sum()
    }

    /// Total variation distance to a distribution over `classes`.
    pub fn tv_to(&self, classes: &[Sigma], probs: &[f64]) -> f64 {
        let total = self.total().max(1) as f64;
        let mut seen = 0.0;
        let mut tv = 0.0;
        for (s, &p) in classes.iter().zip(probs) {
            let f = self.0.get(s).copied().unwrap_or(0) as f64 / total;
            seen += f;
            tv += (f - p).abs();
        }
        // Mass on classes outside the reference support.
        0.5 * (tv + (1.0 - seen).max(0.0))
    }
}

impl Serialize for Histogram {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Entry<'a> {
            sigma: &'a Sigma,
            count: u64,
        }
        let mut seq = serializer.serialize_seq(Some(self.0.len()))?;
        for (sigma, &count) in &self.0 {
            seq.serialize_element(&Entry { sigma, count })?;
        }
        seq.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStats {
    pub generator: String,
    pub seed: u64,
    pub kind: McKind,
    pub steps: u64,
    pub burn_in: u64,
    pub stride: u64,
    /// Number of recorded samples; every histogram below sums to this
    /// (the class histograms per level for swapping, over all levels
    /// otherwise).
    pub samples: u64,
    pub class_histograms: Vec<Histogram>,
    pub level_histogram: Vec<u64>,
    pub same_color: u64,
    pub level_moves: MoveCounter,
    pub temperature_moves: MoveCounter,
    pub out_of_range: u64,
    /// One counter per adjacent pair `(i, i+1)`.
    pub swap_moves: Vec<MoveCounter>,
}

impl RunStats {
    fn empty(state: &McState, levels: usize, burn_in: u64, stride: u64) -> Self {
        RunStats {
            generator: GENERATOR.into(),
            seed: state.seed,
            kind: state.kind,
            steps: 0,
            burn_in,
            stride,
            samples: 0,
            class_histograms: vec![Histogram::default(); levels],
            level_histogram: vec![0; levels],
            same_color: 0,
            level_moves: MoveCounter::default(),
            temperature_moves: MoveCounter::default(),
            out_of_range: 0,
            swap_moves: vec![MoveCounter::default(); levels.saturating_sub(1)],
        }
    }

    /// Sums two runs of the same chain (different seeds or workers).
    pub fn merge(&mut self, other: &RunStats) -> Result<()> {
        if self.kind != other.kind || self.class_histograms.len() != other.class_histograms.len() {
            return Err(Error::InvalidParameter("cannot merge runs of different chains".into()));
        }
        self.steps += other.steps;
        self.samples += other.samples;
        for (a, b) in self.class_histograms.iter_mut().zip(&other.class_histograms) {
            for (s, &c) in &b.0 {
                *a.0.entry(s.clone()).or_insert(0) += c;
            }
        }
        for (a, b) in self.level_histogram.iter_mut().zip(&other.level_histogram) {
            *a += b;
        }
        self.same_color += other.same_color;
        self.level_moves.merge(&other.level_moves);
        self.temperature_moves.merge(&other.temperature_moves);
        self.out_of_range += other.out_of_range;
        for (a, b) in self.swap_moves.iter_mut().zip(&other.swap_moves) {
            a.merge(b);
        }
        Ok(())
    }

    /// Class histogram pooled over levels.
    pub fn pooled_histogram(&self) -> Histogram {
        let mut h = Histogram::default();
        for level in &self.class_histograms {
            for (s, &c) in &level.0 {
                *h.0.entry(s.clone()).or_insert(0) += c;
            }
        }
        h
    }
}

fn potts(ladder: &Ladder) -> Result<&PottsModel> {
    ladder.potts().ok_or_else(|| Error::Unsupported("Monte Carlo runs need a Potts/Ising ladder".into()))
}

fn start_config(pm: &PottsModel, start: Start, restriction: Restriction, rng: &mut ChaCha8Rng) -> Result<SpinConfig> {
    let (q, n) = (pm.q, pm.n as usize);
    let spins = match start {
        Start::Disordered => (0..n).map(|v| (v % q) as u32).collect(),
        Start::Ordered(c) => {
            if c >= q {
                return Err(Error::InvalidParameter(format!("ordered start color {c} outside 0..{q}")));
            }
            if restriction == Restriction::Rgb && c != 0 {
                return Err(Error::InvalidParameter("under RGB the ordered start must use color 0".into()));
            }
            vec![c as u32; n]
        }
        Start::Random => {
            let mut spins: Vec<u32> = (0..n).map(|_| rng.random_range(0..q as u32)).collect();
            if restriction == Restriction::Rgb {
                let counts = SpinConfig { spins: spins.clone() }.counts(q);
                let mut order: Vec<usize> = (0..q).collect();
                order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
                let mut relabel = vec![0u32; q];
                for (new, &old) in order.iter().enumerate() {
                    relabel[old] = new as u32;
                }
                for s in spins.iter_mut() {
                    *s = relabel[*s as usize];
                }
            }
            spins
        }
    };
    SpinConfig::new(spins, q)
}

/// Deterministic initial state for a seed. Tempering starts at the top level.
pub fn mc_init(ladder: &Ladder, kind: McKind, seed: u64, start: Start) -> Result<McState> {
    mc_init_with(ladder, kind, seed, start, Restriction::None)
}

pub fn mc_init_with(
    ladder: &Ladder,
    kind: McKind,
    seed: u64,
    start: Start,
    restriction: Restriction,
) -> Result<McState> {
    let pm = potts(ladder)?;
    if restriction == Restriction::Rgb && pm.q != 3 {
        return Err(Error::Unsupported("the RGB restriction is defined for q = 3 only".into()));
    }
    if let McKind::Metropolis { level } = kind {
        ladder.check_level(level)?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let copies = if kind == McKind::Swap { ladder.levels() } else { 1 };
    let configs = (0..copies).map(|_| start_config(pm, start, restriction, &mut rng)).collect::<Result<Vec<_>>>()?;
    let counts = configs.iter().map(|c| c.counts(pm.q)).collect();
    let level = match kind {
        McKind::Metropolis { level } => level,
        _ => ladder.top(),
    };
    Ok(McState { kind, restriction, configs, counts, level, rng, seed, q: pm.q })
}

impl McState {
    pub fn configs(&self) -> &[SpinConfig] {
        &self.configs
    }

    /// Current class of each stored configuration.
    pub fn sigmas(&self) -> Vec<Sigma> {
        self.counts.iter().map(|c| Sigma::from_vec_unchecked(c.clone())).collect()
    }

    /// Current level (tempering) or the fixed level (Metropolis).
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Compares the cached counts with a full recount.
    pub fn check_counts(&self) -> Result<()> {
        for (cfg, cached) in self.configs.iter().zip(&self.counts) {
            if cfg.counts(self.q) != *cached {
                return Err(Error::InconsistentChain("cached color counts drifted from the configuration".into()));
            }
        }
        Ok(())
    }

    fn log_cfg(ladder: &Ladder, pm: &PottsModel, level: usize, counts: &[u32]) -> f64 {
        ladder.class_weight_counts(pm, level, counts) - log_multinomial_counts(counts)
    }

    fn admits(&self, counts: &[u32]) -> bool {
        self.restriction != Restriction::Rgb || counts.windows(2).all(|w| w[0] >= w[1])
    }

    fn accept(&mut self, log_ratio: f64) -> (f64, bool) {
        let p = log_ratio.exp().min(1.0);
        let u: f64 = self.rng.random();
        (p, u < p)
    }

    fn level_move(&mut self, ladder: &Ladder, pm: &PottsModel, slot: usize, level: usize) -> MoveRecord {
        let n = self.configs[slot].spins.len();
        let v = self.rng.random_range(0..n);
        let b = self.rng.random_range(0..self.q as u32);
        let a = self.configs[slot].spins[v];
        if a == b {
            return MoveRecord { move_type: MoveType::SameColor, level, acceptance: 1.0, accepted: true };
        }
        let mut next = self.counts[slot].clone();
        next[a as usize] -= 1;
        next[b as usize] += 1;
        if !self.admits(&next) {
            return MoveRecord { move_type: MoveType::Level, level, acceptance: 0.0, accepted: false };
        }
        let dw = Self::log_cfg(ladder, pm, level, &next) - Self::log_cfg(ladder, pm, level, &self.counts[slot]);
        let (p, ok) = self.accept(dw);
        if ok {
            self.configs[slot].spins[v] = b;
            self.counts[slot] = next;
        }
        MoveRecord { move_type: MoveType::Level, level, acceptance: p, accepted: ok }
    }

    fn temperature_move(&mut self, ladder: &Ladder, pm: &PottsModel) -> Result<MoveRecord> {
        let i = self.level;
        let up: bool = self.rng.random_bool(0.5);
        let j = if up { i + 1 } else { i.wrapping_sub(1) };
        if j >= ladder.levels() {
            return Ok(MoveRecord { move_type: MoveType::OutOfRange, level: i, acceptance: 0.0, accepted: false });
        }
        let c = &self.counts[0];
        let here = Self::log_cfg(ladder, pm, i, c) - ladder.log_partition(i, self.restriction)?;
        let there = Self::log_cfg(ladder, pm, j, c) - ladder.log_partition(j, self.restriction)?;
        let (p, ok) = self.accept(there - here);
        if ok {
            self.level = j;
        }
        Ok(MoveRecord { move_type: MoveType::Temperature, level: i, acceptance: p, accepted: ok })
    }

    fn swap_move(&mut self, ladder: &Ladder, pm: &PottsModel, i: usize) -> MoveRecord {
        let (a, b) = (&self.counts[i], &self.counts[i + 1]);
        let dw = Self::log_cfg(ladder, pm, i, b) + Self::log_cfg(ladder, pm, i + 1, a)
            - Self::log_cfg(ladder, pm, i, a)
            - Self::log_cfg(ladder, pm, i + 1, b);
        let (p, ok) = self.accept(dw);
        if ok {
            self.configs.swap(i, i + 1);
            self.counts.swap(i, i + 1);
        }
        MoveRecord { move_type: MoveType::Swap, level: i, acceptance: p, accepted: ok }
    }
}

/// Applies one transition of the state's chain.
pub fn mc_step(state: &mut McState, ladder: &Ladder) -> Result<MoveRecord> {
    let pm = potts(ladder)?;
    match state.kind {
        McKind::Metropolis { level } => Ok(state.level_move(ladder, pm, 0, level)),
        McKind::Tempering => {
            if state.rng.random_bool(0.5) {
                let level = state.level;
                Ok(state.level_move(ladder, pm, 0, level))
            } else {
                state.temperature_move(ladder, pm)
            }
        }
        McKind::Swap => {
            let m1 = ladder.levels();
            if m1 == 1 || state.rng.random_bool(0.5) {
                let level = state.rng.random_range(0..m1);
                Ok(state.level_move(ladder, pm, level, level))
            } else {
                let i = state.rng.random_range(0..m1 - 1);
                Ok(state.swap_move(ladder, pm, i))
            }
        }
    }
}

/// Runs `steps` transitions, recording the class and level histograms after
/// every `stride`-th step past `burn_in`. Move counters cover all steps.
pub fn mc_run(state: &mut McState, ladder: &Ladder, steps: u64, burn_in: u64, stride: u64) -> Result<RunStats> {
    if steps <= burn_in {
        return Err(Error::InvalidParameter(format!("steps ({steps}) must exceed burn_in ({burn_in})")));
    }
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be >= 1".into()));
    }
    let levels = ladder.levels();
    if state.configs.len() != if state.kind == McKind::Swap { levels } else { 1 } || state.level >= levels {
        return Err(Error::InvalidParameter("state does not match the ladder".into()));
    }
    let mut stats = RunStats::empty(state, levels, burn_in, stride);
    for t in 1..=steps {
        let rec = mc_step(state, ladder)?;
        match rec.move_type {
            MoveType::SameColor => stats.same_color += 1,
            MoveType::Level => stats.level_moves.record(rec.acceptance, rec.accepted),
            MoveType::Temperature => stats.temperature_moves.record(rec.acceptance, rec.accepted),
            MoveType::OutOfRange => stats.out_of_range += 1,
            MoveType::Swap => stats.swap_moves[rec.level].record(rec.acceptance, rec.accepted),
        }
        if t % RECOUNT_INTERVAL == 0 {
            state.check_counts()?;
        }
        if t > burn_in && (t - burn_in).is_multiple_of(stride) {
            stats.samples += 1;
            record(state, &mut stats);
        }
    }
    stats.steps = steps;
    Ok(stats)
}

fn record(state: &McState, stats: &mut RunStats) {
    let bump = |h: &mut Histogram, c: &[u32]| {
        *h.0.entry(Sigma::from_vec_unchecked(c.to_vec())).or_insert(0) += 1;
    };
    match state.kind {
        McKind::Swap => {
            for (i, c) in state.counts.iter().enumerate() {
                bump(&mut stats.class_histograms[i], c);
            }
            // Every level is occupied by exactly one replica.
            for l in stats.level_histogram.iter_mut() {
                *l += 1;
            }
        }
        _ => {
            bump(&mut stats.class_histograms[state.level], &state.counts[0]);
            stats.level_histogram[state.level] += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{make_ladder, LadderKind};

    fn potts_ladder(q: usize, n: u32, beta: f64, m: usize) -> Ladder {
        make_ladder(PottsModel::new(q, n, beta).unwrap(), m, LadderKind::Tempered, None).unwrap()
    }

    #[test]
    fn starts() {
        let l = potts_ladder(3, 6, 0.5, 0);
        let s = mc_init(&l, McKind::Metropolis { level: 0 }, 1, Start::Ordered(0)).unwrap();
        assert_eq!(s.sigmas()[0].counts(), &[6, 0, 0]);
        let s = mc_init(&l, McKind::Metropolis { level: 0 }, 1, Start::Disordered).unwrap();
        assert_eq!(s.sigmas()[0].counts(), &[2, 2, 2]);
        assert!(mc_init(&l, McKind::Metropolis { level: 0 }, 1, Start::Ordered(3)).is_err());
    }

    #[test]
    fn random_start_is_sorted_under_rgb() {
        let l = potts_ladder(3, 30, 0.1, 0);
        for seed in 0..20 {
            let s = mc_init_with(&l, McKind::Metropolis { level: 0 }, seed, Start::Random, Restriction::Rgb).unwrap();
            assert!(s.sigmas()[0].is_sorted_desc());
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let l = potts_ladder(3, 8, 0.4, 3);
        let mut a = mc_init(&l, McKind::Tempering, 9, Start::Random).unwrap();
        let mut b = mc_init(&l, McKind::Tempering, 9, Start::Random).unwrap();
        for _ in 0..2000 {
            assert_eq!(mc_step(&mut a, &l).unwrap(), mc_step(&mut b, &l).unwrap());
        }
        assert_eq!(a.configs(), b.configs());
        let sa = mc_run(&mut a, &l, 5000, 100, 3).unwrap();
        let sb = mc_run(&mut b, &l, 5000, 100, 3).unwrap();
        assert_eq!(sa, sb);
    }

    #[test]
    fn infinite_temperature_accepts_everything() {
        let l = potts_ladder(3, 10, 0.0, 0);
        let mut s = mc_init(&l, McKind::Metropolis { level: 0 }, 4, Start::Random).unwrap();
        let stats = mc_run(&mut s, &l, 20_000, 0, 1).unwrap();
        assert_eq!(stats.level_moves.accepted, stats.level_moves.proposed);
        assert!(stats.same_color > 0);
    }

    #[test]
    fn single_vertex_tempering_accepts_temperature_moves() {
        let l = potts_ladder(3, 1, 2.0, 4);
        let mut s = mc_init(&l, McKind::Tempering, 2, Start::Random).unwrap();
        let stats = mc_run(&mut s, &l, 20_000, 0, 1).unwrap();
        assert!(stats.temperature_moves.proposed > 0);
        assert_eq!(stats.temperature_moves.accepted, stats.temperature_moves.proposed);
    }

    #[test]
    fn histogram_totals_match_samples() {
        let l = potts_ladder(2, 6, 0.3, 2);
        for kind in [McKind::Tempering, McKind::Swap, McKind::Metropolis { level: 1 }] {
            let mut s = mc_init(&l, kind, 5, Start::Disordered).unwrap();
            let stats = mc_run(&mut s, &l, 10_000, 1000, 7).unwrap();
            assert_eq!(stats.samples, (10_000 - 1000) / 7);
            let per: Vec<u64> = stats.class_histograms.iter().map(Histogram::total).collect();
            if kind == McKind::Swap {
                assert!(per.iter().all(|&t| t == stats.samples));
            } else {
                assert_eq!(per.iter().sum::<u64>(), stats.samples);
            }
            assert_eq!(
                stats.level_histogram.iter().sum::<u64>(),
                stats.samples * if kind == McKind::Swap { 3 } else { 1 }
            );
            let moves = stats.same_color
                + stats.level_moves.proposed
                + stats.temperature_moves.proposed
                + stats.out_of_range
                + stats.swap_moves.iter().map(|c| c.proposed).sum::<u64>();
            assert_eq!(moves, stats.steps);
        }
    }

    #[test]
    fn merge_sums() {
        let l = potts_ladder(2, 4, 0.3, 1);
        let mut a = mc_init(&l, McKind::Swap, 1, Start::Random).unwrap();
        let mut b = mc_init(&l, McKind::Swap, 2, Start::Random).unwrap();
        let mut sa = mc_run(&mut a, &l, 1000, 0, 1).unwrap();
        let sb = mc_run(&mut b, &l, 1000, 0, 1).unwrap();
        sa.merge(&sb).unwrap();
        assert_eq!(sa.samples, 2000);
        assert_eq!(sa.class_histograms[0].total(), 2000);
    }

    #[test]
    fn rejects_bad_schedules() {
        let l = potts_ladder(2, 4, 0.3, 1);
        let mut a = mc_init(&l, McKind::Swap, 1, Start::Random).unwrap();
        assert!(mc_run(&mut a, &l, 10, 10, 1).is_err());
        assert!(mc_run(&mut a, &l, 10, 0, 0).is_err());
    }
}

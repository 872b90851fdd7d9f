//! Per-level single-component kernels shared by every product-type builder.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::{enumerate_sigma, log_multinomial_counts, ExpModel, Ladder, Model, Restriction, Sigma};
use crate::numeric::log_sum_exp;

use super::StateLabel;

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LevelPoint {
    Class(Sigma),
    Point(i64),
}

/// One component's state space with per-level weights and kernels.
#[derive(Debug, Clone)]
pub(crate) struct LevelSpace {
    pub points: Vec<LevelPoint>,
    /// Coordinate that trace thresholds and cut families act on.
    pub coord: Vec<i64>,
    /// `[level][point]` per-configuration log weight.
    pub log_cfg: Vec<Vec<f64>>,
    /// `[level][point]` class log weight.
    pub log_cls: Vec<Vec<f64>>,
    pub log_z: Vec<f64>,
    /// `[level][point]` off-diagonal kernel entries.
    pub kernels: Vec<Vec<Vec<(usize, f64)>>>,
}

impl LevelSpace {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn levels(&self) -> usize {
        self.log_z.len()
    }

    pub fn label(&self, p: usize) -> StateLabel {
        match &self.points[p] {
            LevelPoint::Class(sigma) => StateLabel::Class { sigma: sigma.clone() },
            LevelPoint::Point(x) => StateLabel::Point { x: *x },
        }
    }

    pub fn tempered_label(&self, p: usize, level: usize) -> StateLabel {
        match &self.points[p] {
            LevelPoint::Class(sigma) => StateLabel::Tempered { sigma: sigma.clone(), level },
            LevelPoint::Point(x) => StateLabel::TemperedPoint { x: *x, level },
        }
    }

    pub fn product_label(&self, ps: &[usize]) -> StateLabel {
        match &self.points[0] {
            LevelPoint::Class(_) => StateLabel::Product {
                sigmas: ps
                    .iter()
                    .map(|&p| match &self.points[p] {
                        LevelPoint::Class(s) => s.clone(),
                        LevelPoint::Point(_) => unreachable!(),
                    })
                    .collect(),
            },
            LevelPoint::Point(_) => StateLabel::PointProduct {
                xs: ps
                    .iter()
                    .map(|&p| match &self.points[p] {
                        LevelPoint::Point(x) => *x,
                        LevelPoint::Class(_) => unreachable!(),
                    })
                    .collect(),
            },
        }
    }

    /// Normalized log mass of a point at a level.
    pub fn log_pi(&self, level: usize, p: usize) -> f64 {
        self.log_cls[level][p] - self.log_z[level]
    }

    pub fn from_ladder(ladder: &Ladder, restriction: Restriction, cap: usize) -> Result<LevelSpace> {
        match &ladder.model {
            Model::Potts(pm) => {
                if restriction == Restriction::Rgb && pm.q != 3 {
                    return Err(Error::Unsupported("the RGB restriction is defined for q = 3 only".into()));
                }
                let points = potts_points(pm.n, pm.q, restriction, cap)?;
                let levels = ladder.levels();
                let log_cls: Vec<Vec<f64>> = (0..levels)
                    .map(|i| points.iter().map(|s| ladder.class_weight_counts(pm, i, s.counts())).collect())
                    .collect();
                let log_z = (0..levels).map(|i| ladder.log_partition(i, restriction)).collect::<Result<_>>()?;
                Ok(Self::potts_from_weights(pm.n, pm.q, restriction, points, log_cls, log_z))
            }
            Model::Exp(em) => {
                if restriction != Restriction::None {
                    return Err(Error::Unsupported("restrictions apply to Potts models only".into()));
                }
                Self::exp_levels(em, &ladder.exponents, Some(ladder.log_partitions.clone()), cap)
            }
        }
    }

    pub fn exp_single(model: &ExpModel, exponent: f64, cap: usize) -> Result<LevelSpace> {
        Self::exp_levels(model, &[exponent], None, cap)
    }

    fn exp_levels(em: &ExpModel, exponents: &[f64], log_z: Option<Vec<f64>>, cap: usize) -> Result<LevelSpace> {
        let count = em.n_neg as usize + em.n_pos as usize + 1;
        if count > cap {
            return Err(Error::StateCap { count: count as f64, cap, hint: "lower N, N'" });
        }
        let xs: Vec<i64> = em.points().collect();
        let ln_c = em.c.ln();
        let log_cfg: Vec<Vec<f64>> =
            exponents.iter().map(|e| xs.iter().map(|x| e * x.unsigned_abs() as f64 * ln_c).collect()).collect();
        let log_z = log_z.unwrap_or_else(|| log_cfg.iter().map(|w| log_sum_exp(w)).collect());
        let kernels = log_cfg.iter().map(|w| walk_kernel(w)).collect();
        Ok(LevelSpace {
            coord: xs.clone(),
            points: xs.into_iter().map(LevelPoint::Point).collect(),
            log_cls: log_cfg.clone(),
            log_cfg,
            log_z,
            kernels,
        })
    }

    /// Glauber/Metropolis kernels for arbitrary per-level class weights.
    pub fn potts_from_weights(
        n: u32,
        q: usize,
        restriction: Restriction,
        points: Vec<Sigma>,
        log_cls: Vec<Vec<f64>>,
        log_z: Vec<f64>,
    ) -> LevelSpace {
        let index: HashMap<&[u32], usize> = points.iter().enumerate().map(|(i, s)| (s.counts(), i)).collect();
        let log_cfg: Vec<Vec<f64>> = log_cls
            .iter()
            .map(|w| w.iter().zip(&points).map(|(w, s)| w - log_multinomial_counts(s.counts())).collect())
            .collect();
        let kernels = log_cfg
            .iter()
            .map(|w| {
                points
                    .par_iter()
                    .enumerate()
                    .map(|(p, sigma)| {
                        let mut row = Vec::new();
                        let c = sigma.counts();
                        for a in 0..q {
                            if c[a] == 0 {
                                continue;
                            }
                            let pick = c[a] as f64 / n as f64 / q as f64;
                            for b in 0..q {
                                if a == b {
                                    continue;
                                }
                                let target = sigma.recolor(a, b).expect("count is positive");
                                if !restriction.admits(&target) {
                                    continue;
                                }
                                let t = index[target.counts()];
                                row.push((t, pick * (w[t] - w[p]).exp().min(1.0)));
                            }
                        }
                        row
                    })
                    .collect()
            })
            .collect();
        LevelSpace {
            coord: points.iter().map(|s| s.counts()[0] as i64).collect(),
            points: points.into_iter().map(LevelPoint::Class).collect(),
            log_cfg,
            log_cls,
            log_z,
            kernels,
        }
    }
}

pub(crate) fn potts_points(n: u32, q: usize, restriction: Restriction, cap: usize) -> Result<Vec<Sigma>> {
    let points: Vec<Sigma> = enumerate_sigma(n, q)?.into_iter().filter(|s| restriction.admits(s)).collect();
    if points.len() > cap {
        return Err(Error::StateCap { count: points.len() as f64, cap, hint: "lower n or raise the cap" });
    }
    Ok(points)
}

/// Nearest-neighbour Metropolis walk on consecutive points: each side is
/// proposed with probability 1/2; proposals past either end hold.
fn walk_kernel(w: &[f64]) -> Vec<Vec<(usize, f64)>> {
    (0..w.len())
        .map(|p| {
            let mut row = Vec::with_capacity(2);
            if p > 0 {
                row.push((p - 1, 0.5 * (w[p - 1] - w[p]).exp().min(1.0)));
            }
            if p + 1 < w.len() {
                row.push((p + 1, 0.5 * (w[p + 1] - w[p]).exp().min(1.0)));
            }
            row
        })
        .collect()
}

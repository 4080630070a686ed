//! Brute-force checks for the engine.
//!
//! [`path_sum`] expands every coin branch of every step depth-first and sums
//! path amplitudes. Detector clicks are distinct outcomes per (time, site,
//! mode), so absorbed amplitudes are summed per outcome before squaring.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use thiserror::Error;

use crate::engine::{step, DetectorTally, EngineError, Network, PhotonState};
use crate::lattice::{arm_status, open_cluster, ArmStatus, BoundarySpec, LatticeError, Mode, ReflectorConfig, Sector, SiteIndex};

pub const MAX_PATH_STEPS: u32 = 20;
pub const MAX_PATH_N: usize = 8;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("path sum limited to n <= {MAX_PATH_N} and t <= {MAX_PATH_STEPS}, got n = {n}, t = {t}")]
    TooLarge { n: usize, t: u32 },
    #[error("confinement check needs an absorbing boundary")]
    NotAbsorbing,
    #[error("amplitude escaped a closed cluster: tally {tally:e} at t = {t}")]
    ConfinementViolated { t: u64, tally: f64 },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone)]
pub struct PathSumResult {
    pub n: usize,
    pub amps: BTreeMap<(SiteIndex, Mode), Complex64>,
    pub perc_cum: f64,
    pub back_cum: f64,
    /// Paths that survive all `t_max` steps inside the lattice.
    pub paths_expanded: u64,
    /// Each path absorbed after `k` steps, weighted by the `2^(t_max - k)`
    /// leaves it would have grown into.
    pub absorbed_weight: u64,
}

impl PathSumResult {
    pub fn amp(&self, site: SiteIndex, mode: Mode) -> Complex64 {
        self.amps.get(&(site, mode)).copied().unwrap_or_default()
    }

    pub fn lattice_norm(&self) -> f64 {
        self.amps.values().map(|a| a.norm_sqr()).sum()
    }
}

struct Walker<'a> {
    config: &'a ReflectorConfig,
    boundary: &'a BoundarySpec,
    t_max: u32,
    leaves: BTreeMap<(SiteIndex, Mode), Complex64>,
    clicks: BTreeMap<(u32, SiteIndex, Mode), Complex64>,
    paths: u64,
    absorbed_weight: u64,
}

impl Walker<'_> {
    /// `amp` is the path amplitude of a photon in `mode` at `site` after
    /// `depth` completed steps.
    fn walk(&mut self, site: SiteIndex, mode: Mode, amp: Complex64, depth: u32) {
        if depth == self.t_max {
            *self.leaves.entry((site, mode)).or_default() += amp;
            self.paths += 1;
            return;
        }
        // The coin keeps the sector: the transmitted branch stays in `mode`
        // with weight 1/sqrt2, the reflected one swaps to the sector partner
        // with weight -i/sqrt2.
        let partner = match mode {
            Mode::A => Mode::B,
            Mode::B => Mode::A,
            Mode::C => Mode::D,
            Mode::D => Mode::C,
        };
        let branches = [
            (mode, amp * FRAC_1_SQRT_2),
            (partner, amp * Complex64::new(0.0, -FRAC_1_SQRT_2)),
        ];
        for (out, a) in branches {
            match arm_status(self.config, self.boundary, site, out) {
                ArmStatus::OpenInterior(next) => self.walk(next, out, a, depth + 1),
                ArmStatus::ReflectorInterior | ArmStatus::BoundaryReflect => {
                    self.walk(site, out.opposite(), a * Complex64::new(0.0, -1.0), depth + 1)
                }
                ArmStatus::BoundaryAbsorb(_) => {
                    *self.clicks.entry((depth + 1, site, out)).or_default() += a;
                    self.absorbed_weight += 1u64 << (self.t_max - depth - 1);
                }
            }
        }
    }
}

/// Exhaustive path expansion of `t_max` steps from a unit amplitude at
/// `(site, mode)`.
pub fn path_sum(
    config: &ReflectorConfig,
    boundary: &BoundarySpec,
    site: SiteIndex,
    mode: Mode,
    t_max: u32,
) -> Result<PathSumResult, OracleError> {
    let n = config.n();
    if n > MAX_PATH_N || t_max > MAX_PATH_STEPS {
        return Err(OracleError::TooLarge { n, t: t_max });
    }
    site.check(n)?;
    let mut w = Walker {
        config,
        boundary,
        t_max,
        leaves: BTreeMap::new(),
        clicks: BTreeMap::new(),
        paths: 0,
        absorbed_weight: 0,
    };
    w.walk(site, mode, Complex64::new(1.0, 0.0), 0);

    let mut perc_cum = 0.0;
    let mut back_cum = 0.0;
    for ((_, _, m), a) in &w.clicks {
        match m.sector() {
            Sector::Forward => perc_cum += a.norm_sqr(),
            Sector::Backward => back_cum += a.norm_sqr(),
        }
    }
    Ok(PathSumResult {
        n,
        amps: w.leaves,
        perc_cum,
        back_cum,
        paths_expanded: w.paths,
        absorbed_weight: w.absorbed_weight,
    })
}

/// Largest componentwise deviation between an engine state and a path sum.
pub fn max_deviation(state: &PhotonState, oracle: &PathSumResult) -> f64 {
    let mut worst: f64 = 0.0;
    for y in 1..=state.n() {
        for x in 1..=state.n() {
            let site = SiteIndex::new(x, y);
            for mode in Mode::ALL {
                worst = worst.max((state.amp(site, mode) - oracle.amp(site, mode)).norm());
            }
        }
    }
    worst
}

/// Runs the engine and the path sum side by side for `t_max` steps and
/// returns the largest deviation seen in amplitudes or tallies.
pub fn compare_with_engine(
    config: &ReflectorConfig,
    boundary: &BoundarySpec,
    site: SiteIndex,
    mode: Mode,
    t_max: u32,
) -> Result<f64, OracleError> {
    let net = Network::new(config, *boundary);
    let mut state = PhotonState::init(config.n(), site, mode)?;
    let mut tally = DetectorTally::new();
    for _ in 0..t_max {
        step(&mut state, &net, &mut tally)?;
    }
    let oracle = path_sum(config, boundary, site, mode, t_max)?;
    Ok(max_deviation(&state, &oracle)
        .max((tally.perc_cum - oracle.perc_cum).abs())
        .max((tally.back_cum - oracle.back_cum).abs()))
}

/// True iff the open cluster of `site` never reaches the lattice edge. In
/// that case the engine is also run for `t_max` steps and every detector
/// reading must stay exactly zero, with all amplitude inside the cluster.
pub fn confinement_check(
    config: &ReflectorConfig,
    boundary: &BoundarySpec,
    site: SiteIndex,
    t_max: u64,
) -> Result<bool, OracleError> {
    if *boundary != BoundarySpec::AbsorbAll {
        return Err(OracleError::NotAbsorbing);
    }
    let cluster = open_cluster(config, site)?;
    if cluster.touches_boundary {
        return Ok(false);
    }
    let net = Network::new(config, *boundary);
    let mut state = PhotonState::init(config.n(), site, Mode::A)?;
    let mut tally = DetectorTally::new();
    for _ in 0..t_max {
        step(&mut state, &net, &mut tally)?;
        if tally.total() != 0.0 {
            return Err(OracleError::ConfinementViolated { t: state.t(), tally: tally.total() });
        }
    }
    if state.occupied_sites().iter().any(|s| !cluster.contains(*s)) {
        return Err(OracleError::ConfinementViolated { t: state.t(), tally: 0.0 });
    }
    Ok(true)
}

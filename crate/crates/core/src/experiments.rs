//! Scenario definitions, seeded Monte Carlo sweeps over the fraction of
//! reflector-free connections, and ensemble statistics.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::engine::{evolve, Checkpoint, DetectorTally, EngineError, Network, PhotonState};
use crate::lattice::{check_size, BoundarySpec, LatticeError, Mode, ReflectorConfig, SiteIndex};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("invalid sweep: {0}")]
    Sweep(String),
    #[error("config is {config}x{config} but the scenario is {scenario}x{scenario}")]
    SizeMismatch { config: usize, scenario: usize },
    #[error("realization {realization} at f = {fraction}: {source}")]
    Realization {
        fraction: f64,
        realization: usize,
        #[source]
        source: Box<ExperimentError>,
    },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioKind {
    /// Corner injection, detectors on every side.
    CornerAbsorbing,
    /// Corner injection, mirrors along the injection-side edges except at
    /// the injection site.
    CornerReflecting,
    /// Center injection, detectors on every side.
    CenterAbsorbing,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] =
        [ScenarioKind::CornerAbsorbing, ScenarioKind::CornerReflecting, ScenarioKind::CenterAbsorbing];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::CornerAbsorbing => "corner-absorbing",
            ScenarioKind::CornerReflecting => "corner-reflecting",
            ScenarioKind::CenterAbsorbing => "center-absorbing",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario `{s}` (expected corner-absorbing, corner-reflecting or center-absorbing)"))
    }
}

/// Default checkpoints: `N, 2N, 4N, 8N` and `t_max` itself, keeping those
/// not after `t_max`.
pub fn default_checkpoints(n: usize, t_max: u64) -> Vec<u64> {
    let n = n as u64;
    let mut cps: Vec<u64> = [n, 2 * n, 4 * n, 8 * n, t_max].into_iter().filter(|&t| t >= 1 && t <= t_max).collect();
    cps.sort_unstable();
    cps.dedup();
    cps
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub injection: (SiteIndex, Mode),
    pub boundary: BoundarySpec,
    pub t_max: u64,
    pub checkpoints: Vec<u64>,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, n: usize, t_max: u64) -> Result<Self, ExperimentError> {
        check_size(n)?;
        if t_max == 0 {
            return Err(ExperimentError::Scenario("t_max must be at least 1".into()));
        }
        let corner = SiteIndex::new(1, 1);
        let (site, boundary) = match kind {
            ScenarioKind::CornerAbsorbing => (corner, BoundarySpec::AbsorbAll),
            ScenarioKind::CornerReflecting => (corner, BoundarySpec::ReflectInjectionSides { exit_site: corner }),
            ScenarioKind::CenterAbsorbing => {
                let c = n.div_ceil(2);
                (SiteIndex::new(c, c), BoundarySpec::AbsorbAll)
            }
        };
        Ok(ScenarioSpec {
            kind,
            n,
            injection: (site, Mode::A),
            boundary,
            t_max,
            checkpoints: default_checkpoints(n, t_max),
        })
    }

    pub fn with_checkpoints(mut self, checkpoints: Vec<u64>) -> Result<Self, ExperimentError> {
        let mut cps = checkpoints;
        cps.sort_unstable();
        cps.dedup();
        if cps.is_empty() {
            return Err(ExperimentError::Scenario("at least one checkpoint is required".into()));
        }
        if let Some(&bad) = cps.iter().find(|&&t| t == 0 || t > self.t_max) {
            return Err(ExperimentError::Scenario(format!("checkpoint {bad} outside [1, {}]", self.t_max)));
        }
        self.checkpoints = cps;
        Ok(self)
    }
}

/// Evolves one photon through one reflector configuration.
pub fn run_realization(scenario: &ScenarioSpec, config: &ReflectorConfig) -> Result<Vec<Checkpoint>, ExperimentError> {
    if config.n() != scenario.n {
        return Err(ExperimentError::SizeMismatch { config: config.n(), scenario: scenario.n });
    }
    let net = Network::new(config, scenario.boundary);
    let (site, mode) = scenario.injection;
    let mut state = PhotonState::init(scenario.n, site, mode)?;
    let mut tally = DetectorTally::new();
    Ok(evolve(&mut state, &net, &mut tally, scenario.t_max, &scenario.checkpoints)?)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub fractions: Vec<f64>,
    pub realizations: usize,
    pub master_seed: u64,
}

impl SweepSpec {
    pub fn new(fractions: Vec<f64>, realizations: usize, master_seed: u64) -> Result<Self, ExperimentError> {
        let s = SweepSpec { fractions, realizations, master_seed };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.realizations == 0 {
            return Err(ExperimentError::Sweep("need at least one realization".into()));
        }
        if self.fractions.is_empty() {
            return Err(ExperimentError::Sweep("empty fraction grid".into()));
        }
        if let Some(f) = self.fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(ExperimentError::Sweep(format!("fraction {f} outside [0, 1]")));
        }
        if self.fractions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ExperimentError::Sweep("fraction grid must be strictly increasing".into()));
        }
        Ok(())
    }
}

/// Inclusive grid `start, start + step, ..., end`. Points are snapped to a
/// 1e-12 lattice and the last point is taken as `end` when it lies within
/// 1e-9 of it.
pub fn fraction_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>, ExperimentError> {
    if !(step > 0.0) || !start.is_finite() || !end.is_finite() || end < start {
        return Err(ExperimentError::Sweep(format!("bad grid {start}:{end}:{step}")));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    let mut grid: Vec<f64> = (0..=count).map(|i| ((start + i as f64 * step) * 1e12).round() / 1e12).collect();
    if let Some(last) = grid.last_mut() {
        if (*last - end).abs() <= 1e-9 {
            *last = end;
        }
    }
    Ok(grid)
}

/// Generator for realization `realization` at grid index `fraction_index`.
///
/// The ChaCha8 key is the little-endian concatenation of `master_seed`,
/// `fraction_index` and `realization` followed by eight zero bytes, so
/// every (sweep, grid point, realization) triple owns an independent
/// stream regardless of which worker runs it.
pub fn realization_rng(master_seed: u64, fraction_index: usize, realization: usize) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&(fraction_index as u64).to_le_bytes());
    key[16..24].copy_from_slice(&(realization as u64).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

pub fn realization_config(
    n: usize,
    sweep: &SweepSpec,
    fraction_index: usize,
    realization: usize,
) -> Result<ReflectorConfig, ExperimentError> {
    let mut rng = realization_rng(sweep.master_seed, fraction_index, realization);
    Ok(ReflectorConfig::sample(n, sweep.fractions[fraction_index], &mut rng)?)
}

/// Checkpoint series of every realization at one grid point, in
/// realization order. Realizations run on the current rayon pool.
pub fn run_ensemble(
    scenario: &ScenarioSpec,
    sweep: &SweepSpec,
    fraction_index: usize,
) -> Result<Vec<Vec<Checkpoint>>, ExperimentError> {
    let fraction = sweep.fractions[fraction_index];
    (0..sweep.realizations)
        .into_par_iter()
        .map(|i| {
            realization_config(scenario.n, sweep, fraction_index, i)
                .and_then(|cfg| run_realization(scenario, &cfg))
                .map_err(|e| ExperimentError::Realization { fraction, realization: i, source: Box::new(e) })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub stderr: f64,
}

/// Arithmetic mean and standard error (sample standard deviation over
/// `sqrt M`). A single sample has standard error 0.
pub fn aggregate(samples: &[f64]) -> Summary {
    assert!(!samples.is_empty(), "aggregate needs at least one sample");
    let m = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / m;
    if samples.len() == 1 {
        return Summary { mean, stderr: 0.0 };
    }
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (m - 1.0);
    Summary { mean, stderr: (var / m).sqrt() }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub scenario: ScenarioKind,
    pub n: usize,
    pub t: u64,
    pub f: f64,
    pub realizations: usize,
    pub perc: Summary,
    pub back: Summary,
    pub loc: Summary,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: &str = "scenario,n,t,f,realizations,p_perc,p_back,p_loc,se_perc,se_back,se_loc";

/// `%.9g`-style rendering: nine significant digits, trailing zeros dropped.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    // Rounding can push e.g. 9.999999999 up a decade; the scientific form
    // reports the exponent after rounding.
    let sci = format!("{:.8e}", x);
    let (mantissa, e) = sci.split_once('e').unwrap();
    let e: i32 = e.parse().unwrap();
    let exp = exp.max(e);
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{:.*}", decimals, x);
        trim_zeros(&s)
    } else {
        format!("{}e{}", trim_zeros(mantissa), e)
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

impl SweepResult {
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{},{}",
                r.scenario,
                r.n,
                r.t,
                format_sig9(r.f),
                r.realizations,
                format_sig9(r.perc.mean),
                format_sig9(r.back.mean),
                format_sig9(r.loc.mean),
                format_sig9(r.perc.stderr),
                format_sig9(r.back.stderr),
                format_sig9(r.loc.stderr),
            )?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("csv output is ASCII")
    }

    /// Row for grid value `f` (within 1e-9) at checkpoint `t`.
    pub fn row(&self, f: f64, t: u64) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.t == t && (r.f - f).abs() < 1e-9)
    }
}

/// Summarises the per-realization series of one grid point, one row per
/// checkpoint.
pub fn summarize(scenario: &ScenarioSpec, f: f64, series: &[Vec<Checkpoint>]) -> Vec<SweepRow> {
    (0..scenario.checkpoints.len())
        .map(|k| {
            let pick = |g: fn(&Checkpoint) -> f64| series.iter().map(|s| g(&s[k])).collect::<Vec<_>>();
            SweepRow {
                scenario: scenario.kind,
                n: scenario.n,
                t: series[0][k].t,
                f,
                realizations: series.len(),
                perc: aggregate(&pick(|c| c.p_perc)),
                back: aggregate(&pick(|c| c.p_back)),
                loc: aggregate(&pick(|c| c.p_loc)),
            }
        })
        .collect()
}

/// Full Monte Carlo sweep. Output depends only on `(scenario, sweep)`, not
/// on the worker count.
pub fn run_sweep(scenario: &ScenarioSpec, sweep: &SweepSpec) -> Result<SweepResult, ExperimentError> {
    sweep.validate()?;
    let mut rows = Vec::with_capacity(sweep.fractions.len() * scenario.checkpoints.len());
    for (fi, &f) in sweep.fractions.iter().enumerate() {
        let series = run_ensemble(scenario, sweep, fi)?;
        rows.extend(summarize(scenario, f, &series));
        log::info!("{} f={f}: {} realizations done", scenario.kind, sweep.realizations);
    }
    Ok(SweepResult { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenario_layouts() {
        let s = ScenarioSpec::new(ScenarioKind::CornerAbsorbing, 10, 20).unwrap();
        assert_eq!(s.injection, (SiteIndex::new(1, 1), Mode::A));
        assert_eq!(s.boundary, BoundarySpec::AbsorbAll);
        assert_eq!(s.checkpoints, vec![10, 20]);
        let s = ScenarioSpec::new(ScenarioKind::CornerReflecting, 10, 20).unwrap();
        assert_eq!(s.boundary, BoundarySpec::ReflectInjectionSides { exit_site: SiteIndex::new(1, 1) });
        let s = ScenarioSpec::new(ScenarioKind::CenterAbsorbing, 100, 1600).unwrap();
        assert_eq!(s.injection.0, SiteIndex::new(50, 50));
        assert_eq!(s.checkpoints, vec![100, 200, 400, 800, 1600]);
        let s = ScenarioSpec::new(ScenarioKind::CenterAbsorbing, 7, 5).unwrap();
        assert_eq!(s.injection.0, SiteIndex::new(4, 4));
        assert_eq!(s.checkpoints, vec![5]);
        assert!(ScenarioSpec::new(ScenarioKind::CornerAbsorbing, 1, 5).is_err());
        assert!(ScenarioSpec::new(ScenarioKind::CornerAbsorbing, 4, 0).is_err());
        assert!(ScenarioSpec::new(ScenarioKind::CornerAbsorbing, 4, 8).unwrap().with_checkpoints(vec![9]).is_err());
    }

    #[test]
    fn scenario_names_round_trip() {
        for k in ScenarioKind::ALL {
            assert_eq!(k.name().parse::<ScenarioKind>().unwrap(), k);
        }
        assert!("corner".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[0.3; 10]);
        assert!((s.mean - 0.3).abs() < 1e-15);
        assert!(s.stderr < 1e-15);
        let s = aggregate(&[0.0, 1.0]);
        assert_eq!(s.mean, 0.5);
        assert!((s.stderr - 0.5).abs() < 1e-15);
        assert_eq!(aggregate(&[0.7]).stderr, 0.0);

        // 500 zeros and 500 ones: sample std sqrt(250/999), stderr ~ 0.0158.
        let coin: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let s = aggregate(&coin);
        let expected = (0.25f64 * 1000.0 / 999.0 / 1000.0).sqrt();
        assert!((s.stderr - expected).abs() < 1e-12);
        assert!((s.stderr - 0.0158).abs() < 1e-4);
    }

    #[test]
    fn grid_is_inclusive() {
        let g = fraction_grid(0.5, 1.0, 0.02).unwrap();
        assert_eq!(g.len(), 26);
        assert_eq!(g[0], 0.5);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(fraction_grid(0.7, 0.7, 0.1).unwrap(), vec![0.7]);
        assert_eq!(fraction_grid(0.0, 0.3, 0.1).unwrap().len(), 4);
        assert!(fraction_grid(0.5, 0.4, 0.1).is_err());
        assert!(fraction_grid(0.5, 0.6, 0.0).is_err());
    }

    #[test]
    fn sweep_validation() {
        assert!(SweepSpec::new(vec![0.5], 0, 1).is_err());
        assert!(SweepSpec::new(vec![], 1, 1).is_err());
        assert!(SweepSpec::new(vec![0.6, 0.5], 1, 1).is_err());
        assert!(SweepSpec::new(vec![0.5, 1.1], 1, 1).is_err());
        assert!(SweepSpec::new(vec![0.5, 0.6], 1, 1).is_ok());
    }

    #[test]
    fn seeds_are_distinct_per_index() {
        use rand::Rng;
        let a: u64 = realization_rng(1, 0, 0).random();
        let b: u64 = realization_rng(1, 0, 1).random();
        let c: u64 = realization_rng(1, 1, 0).random();
        let d: u64 = realization_rng(2, 0, 0).random();
        let again: u64 = realization_rng(1, 0, 0).random();
        assert_eq!(a, again);
        assert!(a != b && a != c && a != d && b != c);
    }

    #[test]
    fn realization_size_mismatch() {
        let s = ScenarioSpec::new(ScenarioKind::CornerAbsorbing, 5, 10).unwrap();
        let cfg = ReflectorConfig::open(6).unwrap();
        assert!(matches!(run_realization(&s, &cfg), Err(ExperimentError::SizeMismatch { .. })));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(format_sig9(0.0), "0");
        assert_eq!(format_sig9(1.0), "1");
        assert_eq!(format_sig9(0.58), "0.58");
        assert_eq!(format_sig9(0.5800000000000001), "0.58");
        assert_eq!(format_sig9(1.0 / 3.0), "0.333333333");
        assert_eq!(format_sig9(2.0 / 3.0), "0.666666667");
        assert_eq!(format_sig9(123456789.4), "123456789");
        assert_eq!(format_sig9(1.5e-7), "1.5e-7");
        assert_eq!(format_sig9(0.99999999996), "1");
        assert_eq!(format_sig9(-0.25), "-0.25");
        assert_eq!(format_sig9(0.0001234), "0.0001234");
    }
}

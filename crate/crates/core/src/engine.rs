//! Single-photon state-vector evolution.
//!
//! A step is the beam-splitter coin applied at every site, followed by
//! transport: each component either moves one site along its mode, is
//! mirrored in place into the opposite mode with a factor `-i`, or is
//! absorbed by a boundary detector.
//!
//! Amplitudes are stored site-major (`[site * 4 + mode]`) and only the
//! bounding box of the nonzero support is swept each step. The box grows by
//! at most one site per step and shrinks again once amplitude leaves.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use thiserror::Error;

use crate::lattice::{arm_status, check_size, ArmStatus, BoundarySpec, LatticeError, Mode, ReflectorConfig, Sector, Side, SiteIndex};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("state is {state}x{state} but the network is {network}x{network}")]
    SizeMismatch { state: usize, network: usize },
    #[error("invalid evolution schedule: {0}")]
    Schedule(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Beam-splitter coin on one pair of modes: `(p, q) -> ((p - iq), (q - ip)) / sqrt 2`.
#[inline(always)]
fn coin_pair(p: Complex64, q: Complex64) -> (Complex64, Complex64) {
    (
        Complex64::new(FRAC_1_SQRT_2 * (p.re + q.im), FRAC_1_SQRT_2 * (p.im - q.re)),
        Complex64::new(FRAC_1_SQRT_2 * (q.re + p.im), FRAC_1_SQRT_2 * (q.im - p.re)),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ArmKind {
    Open,
    Reflect,
    Absorb,
}

#[derive(Debug, Clone, Copy)]
struct Absorber {
    slot: usize,
    mode: Mode,
    side: Side,
}

/// Phase picked up by a component on its way into an output slot, indexed
/// by the feeding arm's [`ArmKind`]: unchanged through an open arm, `-i`
/// off a mirror, nothing from a detector.
const FEED_FACTOR: [Complex64; 3] = [Complex64 { re: 1.0, im: 0.0 }, Complex64 { re: 0.0, im: -1.0 }, ZERO];

/// Reflector configuration and boundary rule compiled into lookup tables.
#[derive(Debug, Clone)]
pub struct Network {
    n: usize,
    boundary: BoundarySpec,
    arms: Vec<[ArmKind; 4]>,
    absorbers: Vec<Absorber>,
    /// For every output slot `site * 4 + m`: the slot that feeds it and the
    /// kind of arm it arrives through (the arm of `site` pointing along -m).
    feed_slot: Vec<u32>,
    feed_kind: Vec<u8>,
}

impl Network {
    pub fn new(config: &ReflectorConfig, boundary: BoundarySpec) -> Self {
        let n = config.n();
        let mut arms = Vec::with_capacity(n * n);
        let mut absorbers = Vec::new();
        for y in 1..=n {
            for x in 1..=n {
                let site = SiteIndex::new(x, y);
                let mut kinds = [ArmKind::Open; 4];
                for mode in Mode::ALL {
                    kinds[mode.index()] = match arm_status(config, &boundary, site, mode) {
                        ArmStatus::OpenInterior(_) => ArmKind::Open,
                        ArmStatus::ReflectorInterior | ArmStatus::BoundaryReflect => ArmKind::Reflect,
                        ArmStatus::BoundaryAbsorb(side) => {
                            absorbers.push(Absorber { slot: site.linear(n) * 4 + mode.index(), mode, side });
                            ArmKind::Absorb
                        }
                    };
                }
                arms.push(kinds);
            }
        }

        let mut feed_slot = Vec::with_capacity(4 * n * n);
        let mut feed_kind = Vec::with_capacity(4 * n * n);
        for (s, kinds) in arms.iter().enumerate() {
            for m in Mode::ALL {
                let q = m.opposite();
                let kind = kinds[q.index()];
                let src = match kind {
                    // The open arm along -m leads to the neighbour whose m
                    // component moves here.
                    ArmKind::Open => {
                        let (dx, dy) = q.direction();
                        let nb = s as isize + dx as isize + dy as isize * n as isize;
                        nb as usize * 4 + m.index()
                    }
                    ArmKind::Reflect => s * 4 + q.index(),
                    ArmKind::Absorb => s * 4 + m.index(),
                };
                feed_slot.push(u32::try_from(src).expect("lattice too large for 32-bit slot indices"));
                feed_kind.push(kind as u8);
            }
        }
        Network { n, boundary, arms, absorbers, feed_slot, feed_kind }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn boundary(&self) -> BoundarySpec {
        self.boundary
    }

    fn check(&self, state: &PhotonState) -> Result<(), EngineError> {
        if state.n == self.n {
            Ok(())
        } else {
            Err(EngineError::SizeMismatch { state: state.n, network: self.n })
        }
    }
}

/// Inclusive 0-based bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Rect {
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
}

impl Rect {
    fn point(x: usize, y: usize) -> Rect {
        Rect { x0: x, x1: x, y0: y, y1: y }
    }

    fn full(n: usize) -> Rect {
        Rect { x0: 0, x1: n - 1, y0: 0, y1: n - 1 }
    }

    fn grown(self, n: usize) -> Rect {
        Rect {
            x0: self.x0.saturating_sub(1),
            x1: (self.x1 + 1).min(n - 1),
            y0: self.y0.saturating_sub(1),
            y1: (self.y1 + 1).min(n - 1),
        }
    }

    fn include(this: &mut Option<Rect>, x: usize, y: usize) {
        match this {
            None => *this = Some(Rect::point(x, y)),
            Some(r) => {
                r.x0 = r.x0.min(x);
                r.x1 = r.x1.max(x);
                r.y0 = r.y0.min(y);
                r.y1 = r.y1.max(y);
            }
        }
    }
}

/// Photon amplitude field over (site, mode) plus the step counter.
#[derive(Debug, Clone)]
pub struct PhotonState {
    n: usize,
    amps: Vec<Complex64>,
    scratch: Vec<Complex64>,
    support: Option<Rect>,
    t: u64,
}

impl PhotonState {
    pub fn zero(n: usize) -> Result<Self, EngineError> {
        check_size(n)?;
        Ok(PhotonState {
            n,
            amps: vec![ZERO; 4 * n * n],
            scratch: vec![ZERO; 4 * n * n],
            support: None,
            t: 0,
        })
    }

    /// Unit amplitude at `(site, mode)`, t = 0.
    pub fn init(n: usize, site: SiteIndex, mode: Mode) -> Result<Self, EngineError> {
        let mut s = Self::zero(n)?;
        site.check(n)?;
        s.set_amp(site, mode, Complex64::new(1.0, 0.0));
        Ok(s)
    }

    /// Builds a state from a function of (site, mode); t = 0.
    pub fn from_fn(n: usize, mut f: impl FnMut(SiteIndex, Mode) -> Complex64) -> Result<Self, EngineError> {
        let mut s = Self::zero(n)?;
        for y in 1..=n {
            for x in 1..=n {
                let site = SiteIndex::new(x, y);
                for mode in Mode::ALL {
                    s.set_amp(site, mode, f(site, mode));
                }
            }
        }
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    #[inline]
    fn slot(&self, site: SiteIndex, mode: Mode) -> usize {
        site.linear(self.n) * 4 + mode.index()
    }

    pub fn amp(&self, site: SiteIndex, mode: Mode) -> Complex64 {
        self.amps[self.slot(site, mode)]
    }

    pub fn set_amp(&mut self, site: SiteIndex, mode: Mode, value: Complex64) {
        let i = self.slot(site, mode);
        self.amps[i] = value;
        if value != ZERO {
            Rect::include(&mut self.support, site.x - 1, site.y - 1);
        }
    }

    /// Nonzero components in row-major site order.
    pub fn components(&self) -> impl Iterator<Item = (SiteIndex, Mode, Complex64)> + '_ {
        let n = self.n;
        self.amps.iter().enumerate().filter(|(_, a)| **a != ZERO).map(move |(i, a)| {
            let site = i / 4;
            (SiteIndex::new(site % n + 1, site / n + 1), Mode::from_index(i % 4), *a)
        })
    }

    /// Total probability still inside the lattice.
    pub fn lattice_norm(&self) -> f64 {
        self.sector_norm(None)
    }

    /// Probability carried by the backward modes C and D.
    pub fn backward_norm(&self) -> f64 {
        self.sector_norm(Some(Sector::Backward))
    }

    fn sector_norm(&self, sector: Option<Sector>) -> f64 {
        let Some(r) = self.support else { return 0.0 };
        let modes: &[usize] = match sector {
            None => &[0, 1, 2, 3],
            Some(Sector::Forward) => &[0, 1],
            Some(Sector::Backward) => &[2, 3],
        };
        let mut total = 0.0;
        for y in r.y0..=r.y1 {
            for x in r.x0..=r.x1 {
                let base = (y * self.n + x) * 4;
                for &m in modes {
                    total += self.amps[base + m].norm_sqr();
                }
            }
        }
        total
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &PhotonState) -> Complex64 {
        assert_eq!(self.n, other.n, "inner product of states on different lattices");
        self.amps.iter().zip(&other.amps).map(|(u, v)| u.conj() * v).sum()
    }

    /// Mirror image under x <-> y with A <-> B and C <-> D.
    pub fn transposed(&self) -> PhotonState {
        let mut out = PhotonState::zero(self.n).expect("size already validated");
        for (site, mode, a) in self.components() {
            out.set_amp(site.transposed(), mode.transposed(), a);
        }
        out.t = self.t;
        out
    }

    /// Sites that currently carry amplitude.
    pub fn occupied_sites(&self) -> Vec<SiteIndex> {
        let mut sites: Vec<SiteIndex> = self.components().map(|(s, _, _)| s).collect();
        sites.dedup();
        sites
    }
}

/// Probability absorbed by one detector group during one step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExitRecord {
    pub t: u64,
    pub side: Side,
    pub mode: Mode,
    pub probability: f64,
}

/// Cumulative detector counts. Forward-mode exits count as percolation,
/// backward-mode exits as backscattering.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DetectorTally {
    pub perc_cum: f64,
    pub back_cum: f64,
    pub records: Option<Vec<ExitRecord>>,
}

impl DetectorTally {
    pub fn new() -> Self {
        Self::default()
    }

    /// Tally that also keeps per-step, per-side exit records.
    pub fn with_records() -> Self {
        DetectorTally { records: Some(Vec::new()), ..Self::default() }
    }

    pub fn total(&self) -> f64 {
        self.perc_cum + self.back_cum
    }
}

/// Applies the beam-splitter coin at every site. Positions and `t` are
/// unchanged.
pub fn coin_step(state: &mut PhotonState) {
    let Some(r) = state.support else { return };
    let n = state.n;
    for y in r.y0..=r.y1 {
        let row = &mut state.amps[(y * n + r.x0) * 4..(y * n + r.x1 + 1) * 4];
        for site in row.chunks_exact_mut(4) {
            let (a, b) = coin_pair(site[0], site[1]);
            let (c, d) = coin_pair(site[2], site[3]);
            site[0] = a;
            site[1] = b;
            site[2] = c;
            site[3] = d;
        }
    }
}

/// Moves, mirrors or absorbs every component according to its arm. Exits
/// are stamped with `t + 1`; `t` itself only advances in [`step`].
pub fn transport_step(state: &mut PhotonState, net: &Network, tally: &mut DetectorTally) -> Result<(), EngineError> {
    net.check(state)?;
    shift::<false>(state, net, tally);
    Ok(())
}

/// Component in slot `k`, after the coin when `COIN` is set. The coin
/// partner of a slot is `k ^ 1` (A <-> B, C <-> D).
#[inline(always)]
fn fetch<const COIN: bool>(amps: &[Complex64], k: usize) -> Complex64 {
    let p = amps[k];
    if COIN {
        let q = amps[k ^ 1];
        Complex64::new(FRAC_1_SQRT_2 * (p.re + q.im), FRAC_1_SQRT_2 * (p.im - q.re))
    } else {
        p
    }
}

/// Transport sweep; with `COIN` the beam-splitter is applied on the fly
/// to every value read, so coin + transport costs a single pass.
fn shift<const COIN: bool>(state: &mut PhotonState, net: &Network, tally: &mut DetectorTally) {
    let Some(r) = state.support else { return };
    absorb::<COIN>(state, net, tally);

    let n = state.n;
    let src = &state.amps;
    let dst = &mut state.scratch;
    let e = r.grown(n);
    let mut support = None;
    for y in e.y0..=e.y1 {
        let lo = (y * n + e.x0) * 4;
        let hi = (y * n + e.x1 + 1) * 4;
        let slots = net.feed_slot[lo..hi].iter().zip(&net.feed_kind[lo..hi]);
        let mut first = usize::MAX;
        let mut last = 0;
        for (i, (out, (&from, &kind))) in dst[lo..hi].iter_mut().zip(slots).enumerate() {
            let v = fetch::<COIN>(src, from as usize) * FEED_FACTOR[kind as usize];
            *out = v;
            if v != ZERO {
                first = first.min(i);
                last = i;
            }
        }
        if first != usize::MAX {
            Rect::include(&mut support, e.x0 + first / 4, y);
            Rect::include(&mut support, e.x0 + last / 4, y);
        }
    }
    for y in r.y0..=r.y1 {
        state.amps[(y * n + r.x0) * 4..(y * n + r.x1 + 1) * 4].fill(ZERO);
    }
    std::mem::swap(&mut state.amps, &mut state.scratch);
    state.support = support;
}

fn absorb<const COIN: bool>(state: &PhotonState, net: &Network, tally: &mut DetectorTally) {
    let stamp = state.t + 1;
    let mut perc = 0.0;
    let mut back = 0.0;
    // Indexed by side * 4 + mode.
    let mut groups = [0.0f64; 16];
    for a in &net.absorbers {
        let p = fetch::<COIN>(&state.amps, a.slot).norm_sqr();
        if p == 0.0 {
            continue;
        }
        match a.mode.sector() {
            Sector::Forward => perc += p,
            Sector::Backward => back += p,
        }
        groups[a.side as usize * 4 + a.mode.index()] += p;
    }
    tally.perc_cum += perc;
    tally.back_cum += back;
    if let Some(records) = tally.records.as_mut() {
        for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
            for mode in Mode::ALL {
                let p = groups[side as usize * 4 + mode.index()];
                if p > 0.0 {
                    records.push(ExitRecord { t: stamp, side, mode, probability: p });
                }
            }
        }
    }
}

/// One full time step: coin, then transport, then `t += 1`.
pub fn step(state: &mut PhotonState, net: &Network, tally: &mut DetectorTally) -> Result<(), EngineError> {
    net.check(state)?;
    shift::<true>(state, net, tally);
    state.t += 1;
    Ok(())
}

/// Detector and lattice probabilities at one time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Checkpoint {
    pub t: u64,
    pub p_perc: f64,
    pub p_back: f64,
    pub p_loc: f64,
}

impl Checkpoint {
    pub fn total(&self) -> f64 {
        self.p_perc + self.p_back + self.p_loc
    }
}

/// Steps `state` until `state.t() == t_max`, recording the cumulative
/// tallies and residual lattice norm at every requested checkpoint.
/// Checkpoints are absolute times in `(state.t(), t_max]`, in any order.
pub fn evolve(
    state: &mut PhotonState,
    net: &Network,
    tally: &mut DetectorTally,
    t_max: u64,
    checkpoints: &[u64],
) -> Result<Vec<Checkpoint>, EngineError> {
    net.check(state)?;
    if t_max <= state.t {
        return Err(EngineError::Schedule(format!("t_max {t_max} is not after the current step {}", state.t)));
    }
    let mut marks = checkpoints.to_vec();
    marks.sort_unstable();
    marks.dedup();
    if let Some(&bad) = marks.iter().find(|&&c| c <= state.t || c > t_max) {
        return Err(EngineError::Schedule(format!(
            "checkpoint {bad} outside ({}, {t_max}]",
            state.t
        )));
    }
    let mut out = Vec::with_capacity(marks.len());
    let mut next = marks.iter().peekable();
    while state.t < t_max {
        step(state, net, tally)?;
        if next.peek() == Some(&&state.t) {
            next.next();
            out.push(Checkpoint {
                t: state.t,
                p_perc: tally.perc_cum,
                p_back: tally.back_cum,
                p_loc: state.lattice_norm(),
            });
        }
    }
    Ok(out)
}

/// The per-site 4x4 coin with reflector flags, entered exactly as printed:
/// rows are inputs, `R[m][n]` is the weight of output `n` for input `m`.
/// With every flag clear it reduces to the ordinary beam-splitter coin.
pub fn literal_r_matrix(k: [bool; 4]) -> [[Complex64; 4]; 4] {
    let [ka, kb, kc, kd] = k.map(|b| if b { 1.0 } else { 0.0 });
    let re = |v: f64| Complex64::new(v, 0.0);
    let mi = |v: f64| Complex64::new(0.0, -v);
    [
        [re(1.0 - ka), mi(1.0 - kb), mi(ka), re(kb)],
        [mi(1.0 - ka), re(1.0 - kb), re(ka), mi(kb)],
        [mi(kc), re(kd), re(1.0 - kc), mi(1.0 - kd)],
        [re(kc), mi(kd), mi(1.0 - kc), re(1.0 - kd)],
    ]
}

fn reflector_flags(net: &Network, site: usize) -> [bool; 4] {
    net.arms[site].map(|k| k == ArmKind::Reflect)
}

/// Diagnostic coin that applies `literal_r_matrix / sqrt 2` at every site,
/// with each site's own reflector flags (boundary mirrors count as
/// reflectors). Not unitary once any flag is set.
pub fn coin_step_literal_r(state: &mut PhotonState, net: &Network) -> Result<(), EngineError> {
    net.check(state)?;
    let n = state.n;
    for s in 0..n * n {
        let r = literal_r_matrix(reflector_flags(net, s));
        let input: [Complex64; 4] = state.amps[s * 4..s * 4 + 4].try_into().unwrap();
        for (out_mode, slot) in state.amps[s * 4..s * 4 + 4].iter_mut().enumerate() {
            *slot = (0..4).map(|m| r[m][out_mode] * input[m]).sum::<Complex64>() * FRAC_1_SQRT_2;
        }
    }
    state.support = Some(Rect::full(n));
    Ok(())
}

/// Diagnostic step pairing [`coin_step_literal_r`] with the matching
/// literal shift, where a blocked arm simply leaves the component in place
/// in the same mode. Returns the change in total probability
/// (lattice + detectors) caused by the step and logs a warning when it
/// exceeds 1e-9.
pub fn literal_step(state: &mut PhotonState, net: &Network, tally: &mut DetectorTally) -> Result<f64, EngineError> {
    net.check(state)?;
    let before = state.lattice_norm() + tally.total();
    coin_step_literal_r(state, net)?;
    absorb::<false>(state, net, tally);

    let n = state.n as isize;
    let offset: [isize; 4] = [1, n, -1, -n];
    state.scratch.fill(ZERO);
    for s in 0..(n * n) as usize {
        for m in 0..4 {
            let v = state.amps[s * 4 + m];
            match net.arms[s][m] {
                ArmKind::Open => state.scratch[(s as isize + offset[m]) as usize * 4 + m] += v,
                ArmKind::Reflect => state.scratch[s * 4 + m] += v,
                ArmKind::Absorb => {}
            }
        }
    }
    std::mem::swap(&mut state.amps, &mut state.scratch);
    state.scratch.fill(ZERO);
    state.t += 1;

    let drift = state.lattice_norm() + tally.total() - before;
    if drift.abs() > 1e-9 {
        log::warn!("literal reflector coin changed total probability by {drift:.3e} at t = {}", state.t);
    }
    Ok(drift)
}

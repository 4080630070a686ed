//! Lattice geometry: modes, sites, per-edge reflector configurations and
//! boundary rules.
//!
//! Sites are 1-based, `(x, y)` with `x, y` in `1..=n`. Every interior edge
//! carries exactly one reflector flag, so the two arms that share an edge
//! always agree about it.

use std::collections::VecDeque;
use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("lattice size must be at least 2, got {0}")]
    SizeTooSmall(usize),
    #[error("fraction of connections must lie in [0, 1], got {0}")]
    BadFraction(f64),
    #[error("site ({x}, {y}) is outside the {n}x{n} lattice")]
    SiteOutOfRange { x: usize, y: usize, n: usize },
    #[error("config line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("config I/O: {0}")]
    Io(#[from] io::Error),
}

/// One of the four single-photon arm modes, identified with a travel
/// direction: `A` = +x, `B` = +y, `C` = -x, `D` = -y.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Mode {
    A,
    B,
    C,
    D,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Forward,
    Backward,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::A, Mode::B, Mode::C, Mode::D];

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    #[inline]
    pub fn from_index(i: usize) -> Mode {
        Mode::ALL[i]
    }

    #[inline]
    pub fn opposite(self) -> Mode {
        match self {
            Mode::A => Mode::C,
            Mode::B => Mode::D,
            Mode::C => Mode::A,
            Mode::D => Mode::B,
        }
    }

    #[inline]
    pub fn sector(self) -> Sector {
        match self {
            Mode::A | Mode::B => Sector::Forward,
            Mode::C | Mode::D => Sector::Backward,
        }
    }

    /// Unit step in site coordinates.
    #[inline]
    pub fn direction(self) -> (i64, i64) {
        match self {
            Mode::A => (1, 0),
            Mode::B => (0, 1),
            Mode::C => (-1, 0),
            Mode::D => (0, -1),
        }
    }

    /// Image under the diagonal reflection x <-> y.
    #[inline]
    pub fn transposed(self) -> Mode {
        match self {
            Mode::A => Mode::B,
            Mode::B => Mode::A,
            Mode::C => Mode::D,
            Mode::D => Mode::C,
        }
    }

    /// The lattice side an arm in this mode leaves through.
    #[inline]
    pub fn exit_side(self) -> Side {
        match self {
            Mode::A => Side::Right,
            Mode::B => Side::Top,
            Mode::C => Side::Left,
            Mode::D => Side::Bottom,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Mode::A => "A",
            Mode::B => "B",
            Mode::C => "C",
            Mode::D => "D",
        };
        f.write_str(s)
    }
}

impl FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "A" => Ok(Mode::A),
            "B" => Ok(Mode::B),
            "C" => Ok(Mode::C),
            "D" => Ok(Mode::D),
            _ => Err(format!("unknown mode `{s}` (expected A, B, C or D)")),
        }
    }
}

/// Lattice side: `Left` is x = 1, `Right` is x = N, `Bottom` is y = 1,
/// `Top` is y = N.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Bottom => "bottom",
            Side::Top => "top",
        };
        f.write_str(s)
    }
}

/// Lattice site. Ordered row-major: by `y`, then `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SiteIndex {
    pub x: usize,
    pub y: usize,
}

impl Ord for SiteIndex {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for SiteIndex {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl SiteIndex {
    pub const fn new(x: usize, y: usize) -> Self {
        SiteIndex { x, y }
    }

    pub fn checked(x: usize, y: usize, n: usize) -> Result<Self, LatticeError> {
        let s = SiteIndex { x, y };
        s.check(n)?;
        Ok(s)
    }

    pub fn in_range(self, n: usize) -> bool {
        (1..=n).contains(&self.x) && (1..=n).contains(&self.y)
    }

    pub fn check(self, n: usize) -> Result<(), LatticeError> {
        if self.in_range(n) {
            Ok(())
        } else {
            Err(LatticeError::SiteOutOfRange { x: self.x, y: self.y, n })
        }
    }

    pub fn on_boundary(self, n: usize) -> bool {
        self.x == 1 || self.y == 1 || self.x == n || self.y == n
    }

    /// Neighbouring site in direction `mode`, if it is inside the lattice.
    pub fn step(self, mode: Mode, n: usize) -> Option<SiteIndex> {
        let (dx, dy) = mode.direction();
        let x = self.x as i64 + dx;
        let y = self.y as i64 + dy;
        if x < 1 || y < 1 || x > n as i64 || y > n as i64 {
            None
        } else {
            Some(SiteIndex::new(x as usize, y as usize))
        }
    }

    pub fn transposed(self) -> SiteIndex {
        SiteIndex::new(self.y, self.x)
    }

    /// Row-major 0-based linear index.
    #[inline]
    pub fn linear(self, n: usize) -> usize {
        (self.y - 1) * n + (self.x - 1)
    }
}

impl fmt::Display for SiteIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

pub(crate) fn check_size(n: usize) -> Result<(), LatticeError> {
    if n < 2 {
        Err(LatticeError::SizeTooSmall(n))
    } else {
        Ok(())
    }
}

/// Reflector flags for every interior edge of an `n x n` lattice.
///
/// `h_edges` holds the edge between `(x, y)` and `(x + 1, y)` for
/// `x in 1..n`, `y in 1..=n`; `v_edges` the edge between `(x, y)` and
/// `(x, y + 1)` for `x in 1..=n`, `y in 1..n`. Both are stored row-major
/// (y outer, x inner).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReflectorConfig {
    n: usize,
    h_edges: Vec<bool>,
    v_edges: Vec<bool>,
}

impl ReflectorConfig {
    /// Lattice without any reflectors.
    pub fn open(n: usize) -> Result<Self, LatticeError> {
        check_size(n)?;
        Ok(ReflectorConfig {
            n,
            h_edges: vec![false; (n - 1) * n],
            v_edges: vec![false; n * (n - 1)],
        })
    }

    /// Lattice with a reflector on every interior edge.
    pub fn blocked(n: usize) -> Result<Self, LatticeError> {
        let mut c = Self::open(n)?;
        c.h_edges.fill(true);
        c.v_edges.fill(true);
        Ok(c)
    }

    /// Draws an independent reflector on each interior edge with
    /// probability `1 - fraction`.
    ///
    /// Draws are taken from `rng` in a fixed order: all horizontal edges
    /// row-major, then all vertical edges row-major, one Bernoulli draw per
    /// edge.
    pub fn sample<R: Rng + ?Sized>(n: usize, fraction: f64, rng: &mut R) -> Result<Self, LatticeError> {
        check_size(n)?;
        if !(0.0..=1.0).contains(&fraction) {
            return Err(LatticeError::BadFraction(fraction));
        }
        let p = 1.0 - fraction;
        let h_edges = (0..(n - 1) * n).map(|_| rng.random_bool(p)).collect();
        let v_edges = (0..n * (n - 1)).map(|_| rng.random_bool(p)).collect();
        Ok(ReflectorConfig { n, h_edges, v_edges })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn interior_edge_count(&self) -> usize {
        self.h_edges.len() + self.v_edges.len()
    }

    pub fn reflector_count(&self) -> usize {
        self.h_edges.iter().chain(&self.v_edges).filter(|&&b| b).count()
    }

    #[inline]
    fn h_index(&self, x: usize, y: usize) -> usize {
        (y - 1) * (self.n - 1) + (x - 1)
    }

    #[inline]
    fn v_index(&self, x: usize, y: usize) -> usize {
        (y - 1) * self.n + (x - 1)
    }

    fn check_h(&self, x: usize, y: usize) -> Result<(), LatticeError> {
        if (1..self.n).contains(&x) && (1..=self.n).contains(&y) {
            Ok(())
        } else {
            Err(LatticeError::SiteOutOfRange { x, y, n: self.n })
        }
    }

    fn check_v(&self, x: usize, y: usize) -> Result<(), LatticeError> {
        if (1..=self.n).contains(&x) && (1..self.n).contains(&y) {
            Ok(())
        } else {
            Err(LatticeError::SiteOutOfRange { x, y, n: self.n })
        }
    }

    /// Reflector on the edge `(x, y)`-`(x + 1, y)`.
    pub fn h_edge(&self, x: usize, y: usize) -> bool {
        self.h_edges[self.h_index(x, y)]
    }

    /// Reflector on the edge `(x, y)`-`(x, y + 1)`.
    pub fn v_edge(&self, x: usize, y: usize) -> bool {
        self.v_edges[self.v_index(x, y)]
    }

    pub fn set_h_edge(&mut self, x: usize, y: usize, reflector: bool) -> Result<(), LatticeError> {
        self.check_h(x, y)?;
        let i = self.h_index(x, y);
        self.h_edges[i] = reflector;
        Ok(())
    }

    pub fn set_v_edge(&mut self, x: usize, y: usize, reflector: bool) -> Result<(), LatticeError> {
        self.check_v(x, y)?;
        let i = self.v_index(x, y);
        self.v_edges[i] = reflector;
        Ok(())
    }

    /// Reflector flag of the interior edge leaving `site` in `mode`, or
    /// `None` when that arm leaves the lattice.
    pub fn arm_reflector(&self, site: SiteIndex, mode: Mode) -> Option<bool> {
        let n = self.n;
        let SiteIndex { x, y } = site;
        match mode {
            Mode::A if x < n => Some(self.h_edge(x, y)),
            Mode::C if x > 1 => Some(self.h_edge(x - 1, y)),
            Mode::B if y < n => Some(self.v_edge(x, y)),
            Mode::D if y > 1 => Some(self.v_edge(x, y - 1)),
            _ => None,
        }
    }

    /// Mirror image under x <-> y.
    pub fn transposed(&self) -> ReflectorConfig {
        let n = self.n;
        let mut t = ReflectorConfig::open(n).expect("size already validated");
        for y in 1..=n {
            for x in 1..n {
                // h-edge (x,y)-(x+1,y) maps to v-edge (y,x)-(y,x+1)
                let i = t.v_index(y, x);
                t.v_edges[i] = self.h_edge(x, y);
            }
        }
        for y in 1..n {
            for x in 1..=n {
                let i = t.h_index(y, x);
                t.h_edges[i] = self.v_edge(x, y);
            }
        }
        t
    }

    /// Writes the plain-text config format: `n=<N>` followed by one
    /// `h x y 0|1` / `v x y 0|1` line per interior edge.
    pub fn write_to<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.n;
        writeln!(w, "n={n}")?;
        for y in 1..=n {
            for x in 1..n {
                writeln!(w, "h {x} {y} {}", self.h_edge(x, y) as u8)?;
            }
        }
        for y in 1..n {
            for x in 1..=n {
                writeln!(w, "v {x} {y} {}", self.v_edge(x, y) as u8)?;
            }
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LatticeError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LatticeError> {
        let text = fs::read_to_string(path)?;
        text.parse()
    }
}

impl FromStr for ReflectorConfig {
    type Err = LatticeError;

    /// Parses the config format. Edges without a line default to open;
    /// blank lines and `#` comments are skipped; an edge given twice is an
    /// error.
    fn from_str(text: &str) -> Result<Self, Self::Err> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

        let err = |line: usize, msg: String| LatticeError::Parse { line, msg };

        let (first_no, first) = lines.next().ok_or_else(|| err(1, "empty config file".into()))?;
        let n: usize = first
            .strip_prefix("n=")
            .ok_or_else(|| err(first_no, format!("expected `n=<N>`, found `{first}`")))?
            .trim()
            .parse()
            .map_err(|e| err(first_no, format!("bad lattice size: {e}")))?;
        if n < 2 {
            return Err(err(first_no, format!("lattice size must be at least 2, got {n}")));
        }

        let mut config = ReflectorConfig::open(n)?;
        let mut seen_h = vec![false; config.h_edges.len()];
        let mut seen_v = vec![false; config.v_edges.len()];

        for (no, line) in lines {
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(no, format!("expected `h|v x y 0|1`, found `{line}`")));
            }
            let coord = |s: &str| -> Result<usize, LatticeError> {
                s.parse().map_err(|e| err(no, format!("bad coordinate `{s}`: {e}")))
            };
            let x = coord(fields[1])?;
            let y = coord(fields[2])?;
            let flag = match fields[3] {
                "0" => false,
                "1" => true,
                other => return Err(err(no, format!("edge flag must be 0 or 1, found `{other}`"))),
            };
            match fields[0] {
                "h" => {
                    config
                        .check_h(x, y)
                        .map_err(|_| err(no, format!("h edge ({x}, {y}) outside a lattice of size {n}")))?;
                    let i = config.h_index(x, y);
                    if std::mem::replace(&mut seen_h[i], true) {
                        return Err(err(no, format!("h edge ({x}, {y}) listed twice")));
                    }
                    config.h_edges[i] = flag;
                }
                "v" => {
                    config
                        .check_v(x, y)
                        .map_err(|_| err(no, format!("v edge ({x}, {y}) outside a lattice of size {n}")))?;
                    let i = config.v_index(x, y);
                    if std::mem::replace(&mut seen_v[i], true) {
                        return Err(err(no, format!("v edge ({x}, {y}) listed twice")));
                    }
                    config.v_edges[i] = flag;
                }
                other => return Err(err(no, format!("edge kind must be `h` or `v`, found `{other}`"))),
            }
        }
        Ok(config)
    }
}

/// How arms that leave the lattice behave.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundarySpec {
    /// Every outgoing boundary arm ends in a detector.
    AbsorbAll,
    /// Arms leaving through the x = 1 and y = 1 sides are mirrored back,
    /// except the backward arms at `exit_site`; the x = N and y = N sides
    /// absorb.
    ReflectInjectionSides { exit_site: SiteIndex },
    /// Closed system: every boundary arm is mirrored. Diagnostic only.
    AllReflect,
}

impl BoundarySpec {
    pub fn transposed(self) -> BoundarySpec {
        match self {
            BoundarySpec::ReflectInjectionSides { exit_site } => BoundarySpec::ReflectInjectionSides {
                exit_site: exit_site.transposed(),
            },
            other => other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArmStatus {
    OpenInterior(SiteIndex),
    ReflectorInterior,
    BoundaryAbsorb(Side),
    BoundaryReflect,
}

/// Classifies the arm leaving `site` in `mode`.
pub fn arm_status(config: &ReflectorConfig, boundary: &BoundarySpec, site: SiteIndex, mode: Mode) -> ArmStatus {
    let n = config.n();
    debug_assert!(site.in_range(n));
    if let Some(neighbor) = site.step(mode, n) {
        return if config.arm_reflector(site, mode) == Some(true) {
            ArmStatus::ReflectorInterior
        } else {
            ArmStatus::OpenInterior(neighbor)
        };
    }
    let side = mode.exit_side();
    match boundary {
        BoundarySpec::AbsorbAll => ArmStatus::BoundaryAbsorb(side),
        BoundarySpec::AllReflect => ArmStatus::BoundaryReflect,
        BoundarySpec::ReflectInjectionSides { exit_site } => match side {
            Side::Right | Side::Top => ArmStatus::BoundaryAbsorb(side),
            Side::Left | Side::Bottom if site == *exit_site => ArmStatus::BoundaryAbsorb(side),
            Side::Left | Side::Bottom => ArmStatus::BoundaryReflect,
        },
    }
}

/// Open cluster of a site: the sites reachable through reflector-free
/// interior edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    pub sites: Vec<SiteIndex>,
    pub touches_boundary: bool,
}

impl Cluster {
    pub fn contains(&self, site: SiteIndex) -> bool {
        self.sites.binary_search(&site).is_ok()
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
}

/// Breadth-first search of the open cluster containing `origin`. Sites come
/// back sorted.
pub fn open_cluster(config: &ReflectorConfig, origin: SiteIndex) -> Result<Cluster, LatticeError> {
    let n = config.n();
    origin.check(n)?;
    let mut visited = vec![false; n * n];
    let mut queue = VecDeque::from([origin]);
    visited[origin.linear(n)] = true;
    let mut sites = Vec::new();
    let mut touches_boundary = false;
    while let Some(s) = queue.pop_front() {
        touches_boundary |= s.on_boundary(n);
        sites.push(s);
        for mode in Mode::ALL {
            if config.arm_reflector(s, mode) == Some(false) {
                let nb = s.step(mode, n).expect("interior arm has a neighbour");
                let i = nb.linear(n);
                if !visited[i] {
                    visited[i] = true;
                    queue.push_back(nb);
                }
            }
        }
    }
    sites.sort_unstable();
    Ok(Cluster { sites, touches_boundary })
}

//! Single-photon amplitude tracking through Mach-Zehnder layouts.
//!
//! A photon is a coherent sum of branches labeled by optical path, linear
//! polarization and arrival time bin (in units of the delay `T`). Elements act
//! on the branches of the paths they touch; branches that end up with the same
//! label are merged by adding amplitudes. Absorbing elements may lose norm and
//! the missing probability is reported as absorbed.
//!
//! Beam splitters use the real Hadamard convention `(a, b) → ((a+b)/√2, (a−b)/√2)`
//! so that the first output of a bare interferometer is the `cos²(φ/2)` port.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::json;
use crate::statevec::Amplitude;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("unknown path label `{0}`")]
    UnknownPath(String),
    #[error("{element} needs a polarized photon but path `{path}` carries an unpolarized branch")]
    Unpolarized { element: &'static str, path: String },
    #[error("phase {0} is not finite")]
    NonFinitePhase(f64),
    #[error("unknown layout `{0}`")]
    UnknownLayout(String),
}

pub type Result<T> = std::result::Result<T, OpticsError>;

/// Linear polarization label carried by a branch.
///
/// `A135` is the 135° state with its sign fixed by
/// `|H⟩ = (|D45⟩ + |A135⟩)/√2` and `|V⟩ = (|D45⟩ − |A135⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PolTag {
    /// Polarization not modeled. Only legal before any polarizing element.
    None,
    H,
    V,
    D45,
    A135,
}

impl PolTag {
    /// Real Jones vector `(h, v)`, or `None` for an untracked polarization.
    pub fn jones(self) -> Option<[f64; 2]> {
        match self {
            PolTag::None => None,
            PolTag::H => Some([1.0, 0.0]),
            PolTag::V => Some([0.0, 1.0]),
            PolTag::D45 => Some([FRAC_1_SQRT_2, FRAC_1_SQRT_2]),
            PolTag::A135 => Some([FRAC_1_SQRT_2, -FRAC_1_SQRT_2]),
        }
    }

    fn is_diagonal(self) -> bool {
        matches!(self, PolTag::D45 | PolTag::A135)
    }

    fn is_rectilinear(self) -> bool {
        matches!(self, PolTag::H | PolTag::V)
    }
}

/// Polarizer orientations that appear in the layouts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolarizerAngle {
    Deg0,
    Deg45,
    Deg90,
    Deg135,
}

impl PolarizerAngle {
    /// State transmitted by a polarizer at this angle.
    pub fn passes(self) -> PolTag {
        match self {
            PolarizerAngle::Deg0 => PolTag::H,
            PolarizerAngle::Deg45 => PolTag::D45,
            PolarizerAngle::Deg90 => PolTag::V,
            PolarizerAngle::Deg135 => PolTag::A135,
        }
    }

    /// The orthogonal orientation.
    pub fn orthogonal(self) -> PolarizerAngle {
        match self {
            PolarizerAngle::Deg0 => PolarizerAngle::Deg90,
            PolarizerAngle::Deg45 => PolarizerAngle::Deg135,
            PolarizerAngle::Deg90 => PolarizerAngle::Deg0,
            PolarizerAngle::Deg135 => PolarizerAngle::Deg45,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhotonBranch {
    pub path: String,
    pub pol: PolTag,
    pub time_bin: u32,
    pub amp: Amplitude,
}

type Key = (String, PolTag, u32);

/// Sub-normalized coherent superposition of photon branches.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PhotonState {
    branches: BTreeMap<Key, Amplitude>,
    labels: BTreeSet<String>,
}

/// Path the source photon enters on.
pub const SOURCE_PATH: &str = "in";
/// Unused input port of the first beam splitter.
pub const VACUUM_PATH: &str = "vac";

impl PhotonState {
    /// One photon on [`SOURCE_PATH`] with polarization `pol`.
    pub fn source(pol: PolTag) -> Self {
        let mut state = Self::default();
        state.labels.insert(SOURCE_PATH.to_string());
        state.labels.insert(VACUUM_PATH.to_string());
        state.add(SOURCE_PATH, pol, 0, Amplitude::new(1.0, 0.0));
        state
    }

    pub fn branches(&self) -> impl Iterator<Item = PhotonBranch> + '_ {
        self.branches.iter().map(|((path, pol, t), amp)| PhotonBranch {
            path: path.clone(),
            pol: *pol,
            time_bin: *t,
            amp: *amp,
        })
    }

    pub fn labels(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    /// `Σ|amp|²` over all branches.
    pub fn total_probability(&self) -> f64 {
        self.branches.values().map(|a| a.norm_sqr()).sum()
    }

    /// Coherent insertion.
    fn add(&mut self, path: &str, pol: PolTag, time_bin: u32, amp: Amplitude) {
        *self
            .branches
            .entry((path.to_string(), pol, time_bin))
            .or_insert(Amplitude::new(0.0, 0.0)) += amp;
    }

    fn add_jones(&mut self, path: &str, time_bin: u32, amp: Amplitude, hv: [f64; 2]) {
        if hv[0] != 0.0 {
            self.add(path, PolTag::H, time_bin, amp * hv[0]);
        }
        if hv[1] != 0.0 {
            self.add(path, PolTag::V, time_bin, amp * hv[1]);
        }
    }

    fn require(&self, path: &str) -> Result<()> {
        if self.labels.contains(path) {
            Ok(())
        } else {
            Err(OpticsError::UnknownPath(path.to_string()))
        }
    }

    /// Removes and returns every branch on `path` as `(pol, time_bin, amp)`.
    fn take(&mut self, path: &str) -> Vec<(PolTag, u32, Amplitude)> {
        let keys: Vec<Key> = self
            .branches
            .keys()
            .filter(|(p, _, _)| p == path)
            .cloned()
            .collect();
        keys.into_iter()
            .map(|k| {
                let amp = self.branches.remove(&k).expect("key listed above");
                (k.1, k.2, amp)
            })
            .collect()
    }

    /// Re-expresses a (path, time) sector in the H/V basis when it holds both
    /// rectilinear and diagonal labels, so branch labels stay orthogonal.
    fn canonicalize(&mut self) {
        let mut mixed = BTreeSet::new();
        let mut seen: BTreeMap<(String, u32), (bool, bool)> = BTreeMap::new();
        for (path, pol, t) in self.branches.keys() {
            let e = seen.entry((path.clone(), *t)).or_default();
            e.0 |= pol.is_rectilinear();
            e.1 |= pol.is_diagonal();
            if e.0 && e.1 {
                mixed.insert((path.clone(), *t));
            }
        }
        for (path, t) in mixed {
            let keys: Vec<Key> = self
                .branches
                .keys()
                .filter(|(p, pol, tb)| *p == path && *tb == t && *pol != PolTag::None)
                .cloned()
                .collect();
            for k in keys {
                let amp = self.branches.remove(&k).expect("key listed above");
                let hv = k.1.jones().expect("polarized branch");
                self.add_jones(&path, t, amp, hv);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpticalElement {
    /// 50/50 splitter: `out[0] = (in[0]+in[1])/√2`, `out[1] = (in[0]−in[1])/√2`.
    BeamSplitter { inputs: [String; 2], outputs: [String; 2] },
    Phase { path: String, phi: f64 },
    /// Shifts the path's branches one time bin later, without extra phase.
    Delay { path: String },
    /// Absorbing linear polarizer; the orthogonal component is lost.
    PolarizerAbsorb { path: String, angle: PolarizerAngle },
    /// Lossless polarizer sending the `angle` component to `outputs[0]` and
    /// the orthogonal component to `outputs[1]`.
    PolarizingBs { input: String, outputs: [String; 2], angle: PolarizerAngle },
    /// Half-wave plate with its fast axis at 45°: `(h, v) → (v, h)`, turning
    /// H into V and V into H.
    HalfWavePlate { path: String },
    Relabel { from: String, to: String },
}

impl OpticalElement {
    pub fn name(&self) -> &'static str {
        match self {
            OpticalElement::BeamSplitter { .. } => "BEAM_SPLITTER",
            OpticalElement::Phase { .. } => "PHASE",
            OpticalElement::Delay { .. } => "DELAY",
            OpticalElement::PolarizerAbsorb { .. } => "POLARIZER_ABSORB",
            OpticalElement::PolarizingBs { .. } => "POLARIZING_BS",
            OpticalElement::HalfWavePlate { .. } => "HALF_WAVE_PLATE",
            OpticalElement::Relabel { .. } => "RELABEL",
        }
    }

    fn bs(a: &str, b: &str, c: &str, d: &str) -> Self {
        OpticalElement::BeamSplitter {
            inputs: [a.into(), b.into()],
            outputs: [c.into(), d.into()],
        }
    }

    fn relabel(from: &str, to: &str) -> Self {
        OpticalElement::Relabel {
            from: from.into(),
            to: to.into(),
        }
    }
}

/// Pushes `state` through one element.
pub fn propagate(state: &PhotonState, element: &OpticalElement) -> Result<PhotonState> {
    let mut out = state.clone();
    match element {
        OpticalElement::BeamSplitter { inputs, outputs } => {
            out.require(&inputs[0])?;
            out.require(&inputs[1])?;
            let a = out.take(&inputs[0]);
            let b = out.take(&inputs[1]);
            out.labels.remove(&inputs[0]);
            out.labels.remove(&inputs[1]);
            out.labels.extend(outputs.iter().cloned());
            for (pol, t, amp) in a {
                out.add(&outputs[0], pol, t, amp * FRAC_1_SQRT_2);
                out.add(&outputs[1], pol, t, amp * FRAC_1_SQRT_2);
            }
            for (pol, t, amp) in b {
                out.add(&outputs[0], pol, t, amp * FRAC_1_SQRT_2);
                out.add(&outputs[1], pol, t, -amp * FRAC_1_SQRT_2);
            }
        }
        OpticalElement::Phase { path, phi } => {
            out.require(path)?;
            if !phi.is_finite() {
                return Err(OpticsError::NonFinitePhase(*phi));
            }
            let w = Amplitude::from_polar(1.0, *phi);
            for (key, amp) in out.branches.iter_mut() {
                if key.0 == *path {
                    *amp *= w;
                }
            }
        }
        OpticalElement::Delay { path } => {
            out.require(path)?;
            for (pol, t, amp) in out.take(path) {
                out.add(path, pol, t + 1, amp);
            }
        }
        OpticalElement::PolarizerAbsorb { path, angle } => {
            out.require(path)?;
            let pass = angle.passes();
            let axis = pass.jones().expect("polarizer axis");
            for (pol, t, amp) in out.take(path) {
                let v = pol.jones().ok_or_else(|| OpticsError::Unpolarized {
                    element: element.name(),
                    path: path.clone(),
                })?;
                let c = v[0] * axis[0] + v[1] * axis[1];
                out.add(path, pass, t, amp * c);
            }
        }
        OpticalElement::PolarizingBs {
            input,
            outputs,
            angle,
        } => {
            out.require(input)?;
            let ports = [angle.passes(), angle.orthogonal().passes()];
            let branches = out.take(input);
            out.labels.remove(input);
            out.labels.extend(outputs.iter().cloned());
            for (pol, t, amp) in branches {
                let v = pol.jones().ok_or_else(|| OpticsError::Unpolarized {
                    element: element.name(),
                    path: input.clone(),
                })?;
                for (port, tag) in outputs.iter().zip(ports) {
                    let axis = tag.jones().expect("port axis");
                    let c = v[0] * axis[0] + v[1] * axis[1];
                    if c != 0.0 {
                        out.add(port, tag, t, amp * c);
                    }
                }
            }
        }
        OpticalElement::HalfWavePlate { path } => {
            out.require(path)?;
            for (pol, t, amp) in out.take(path) {
                let [h, v] = pol.jones().ok_or_else(|| OpticsError::Unpolarized {
                    element: element.name(),
                    path: path.clone(),
                })?;
                out.add_jones(path, t, amp, [v, h]);
            }
        }
        OpticalElement::Relabel { from, to } => {
            out.require(from)?;
            let branches = out.take(from);
            out.labels.remove(from);
            out.labels.insert(to.clone());
            for (pol, t, amp) in branches {
                out.add(to, pol, t, amp);
            }
        }
    }
    out.canonicalize();
    Ok(out)
}

/// Probability of each `(detector, time_bin)` click plus the absorbed remainder.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DetectionDistribution {
    pub entries: BTreeMap<(String, u32), f64>,
    pub absorbed: f64,
}

impl DetectionDistribution {
    pub fn prob(&self, detector: &str, time_bin: u32) -> f64 {
        self.entries
            .get(&(detector.to_string(), time_bin))
            .copied()
            .unwrap_or(0.0)
    }

    /// Probability at `detector` summed over time bins.
    pub fn detector_total(&self, detector: &str) -> f64 {
        self.entries
            .iter()
            .filter(|((d, _), _)| d == detector)
            .map(|(_, p)| p)
            .sum()
    }

    pub fn detected(&self) -> f64 {
        self.entries.values().sum()
    }

    pub fn detectors(&self) -> BTreeSet<&str> {
        self.entries.keys().map(|(d, _)| d.as_str()).collect()
    }

    pub fn time_bins(&self) -> BTreeSet<u32> {
        self.entries.keys().map(|(_, t)| *t).collect()
    }

    /// Equal-weight classical mixture of two distributions.
    pub fn mix(&self, other: &DetectionDistribution) -> DetectionDistribution {
        let mut entries = BTreeMap::new();
        for key in self.entries.keys().chain(other.entries.keys()) {
            let p = 0.5
                * (self.entries.get(key).copied().unwrap_or(0.0)
                    + other.entries.get(key).copied().unwrap_or(0.0));
            entries.insert(key.clone(), p);
        }
        DetectionDistribution {
            entries,
            absorbed: 0.5 * (self.absorbed + other.absorbed),
        }
    }
}

#[derive(Serialize)]
struct EntryRecord<'a> {
    detector: &'a str,
    time_bin: u32,
    #[serde(serialize_with = "json::f64_12")]
    probability: f64,
}

impl Serialize for DetectionDistribution {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Repr<'a> {
            entries: Vec<EntryRecord<'a>>,
            #[serde(serialize_with = "json::f64_12")]
            absorbed: f64,
        }
        Repr {
            entries: self
                .entries
                .iter()
                .map(|((d, t), p)| EntryRecord {
                    detector: d,
                    time_bin: *t,
                    probability: *p,
                })
                .collect(),
            absorbed: self.absorbed,
        }
        .serialize(s)
    }
}

/// Click probabilities for every labeled path.
///
/// Amplitudes at the same `(path, time_bin)` are added as Jones vectors before
/// squaring, so orthogonal polarizations add incoherently.
pub fn detect(state: &PhotonState) -> DetectionDistribution {
    let zero = Amplitude::new(0.0, 0.0);
    let mut fields: BTreeMap<(String, u32), [Amplitude; 3]> = BTreeMap::new();
    for label in &state.labels {
        fields.insert((label.clone(), 0), [zero; 3]);
    }
    for ((path, pol, t), amp) in &state.branches {
        let f = fields.entry((path.clone(), *t)).or_insert([zero; 3]);
        match pol.jones() {
            Some([h, v]) => {
                f[0] += amp * h;
                f[1] += amp * v;
            }
            None => f[2] += amp,
        }
    }
    let entries: BTreeMap<(String, u32), f64> = fields
        .into_iter()
        .filter(|((path, _), _)| path != VACUUM_PATH)
        .map(|(k, f)| (k, f.iter().map(|a| a.norm_sqr()).sum()))
        .collect();
    let detected: f64 = entries.values().sum();
    DetectionDistribution {
        entries,
        absorbed: (1.0 - detected).max(0.0),
    }
}

/// How Alice tags the interferometer arms with which-path information.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum WpiKind {
    /// Arm 2 carries a half-wave plate, so the arms leave H and V polarized.
    Polarization,
    /// Arm 2 carries the delay `T`.
    TimeBin,
}

/// Bob's optics after the second beam splitter.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BobOptics {
    /// Bare detectors `A → D1`, `B → D2`.
    Direct,
    /// Second interferometer with the same delay; interference at `t = T`.
    TimeBinEraser,
    /// 45° polarizing splitters: `A → D1 (45°), D2 (135°)`, `B → D3 (45°), D4 (135°)`.
    PbsEraser,
    /// Absorbing 45° polarizers: `A → D1`, `B → D2`.
    AbsorbEraser,
}

/// Alice's interferometer up to and including the second beam splitter, whose
/// outputs are paths `A` and `B`.
pub fn alice_optics(wpi: Option<WpiKind>, phi: f64) -> Vec<OpticalElement> {
    let mut els = vec![OpticalElement::bs(SOURCE_PATH, VACUUM_PATH, "arm1", "arm2")];
    match wpi {
        None => {}
        Some(WpiKind::Polarization) => els.push(OpticalElement::HalfWavePlate { path: "arm2".into() }),
        Some(WpiKind::TimeBin) => els.push(OpticalElement::Delay { path: "arm2".into() }),
    }
    els.push(OpticalElement::Phase {
        path: "arm2".into(),
        phi,
    });
    els.push(OpticalElement::bs("arm1", "arm2", "A", "B"));
    els
}

/// Bob's optics fed by paths `A` and `B`, ending on detector labels.
pub fn bob_optics(optics: BobOptics) -> Vec<OpticalElement> {
    match optics {
        BobOptics::Direct => vec![
            OpticalElement::relabel("A", "D1"),
            OpticalElement::relabel("B", "D2"),
        ],
        BobOptics::TimeBinEraser => vec![
            OpticalElement::Delay { path: "B".into() },
            OpticalElement::bs("A", "B", "D1", "D2"),
        ],
        BobOptics::PbsEraser => vec![
            OpticalElement::PolarizingBs {
                input: "A".into(),
                outputs: ["D1".into(), "D2".into()],
                angle: PolarizerAngle::Deg45,
            },
            OpticalElement::PolarizingBs {
                input: "B".into(),
                outputs: ["D3".into(), "D4".into()],
                angle: PolarizerAngle::Deg45,
            },
        ],
        BobOptics::AbsorbEraser => vec![
            OpticalElement::PolarizerAbsorb {
                path: "A".into(),
                angle: PolarizerAngle::Deg45,
            },
            OpticalElement::PolarizerAbsorb {
                path: "B".into(),
                angle: PolarizerAngle::Deg45,
            },
            OpticalElement::relabel("A", "D1"),
            OpticalElement::relabel("B", "D2"),
        ],
    }
}

/// Named interferometer configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayoutKind {
    BareMzi,
    MziPolWpi,
    MziTimebinWpi,
    EraserTimebin,
    EraserPbs,
    EraserAbsorb,
}

impl LayoutKind {
    pub const ALL: [LayoutKind; 6] = [
        LayoutKind::BareMzi,
        LayoutKind::MziPolWpi,
        LayoutKind::MziTimebinWpi,
        LayoutKind::EraserTimebin,
        LayoutKind::EraserPbs,
        LayoutKind::EraserAbsorb,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayoutKind::BareMzi => "BARE_MZI",
            LayoutKind::MziPolWpi => "MZI_POL_WPI",
            LayoutKind::MziTimebinWpi => "MZI_TIMEBIN_WPI",
            LayoutKind::EraserTimebin => "ERASER_TIMEBIN",
            LayoutKind::EraserPbs => "ERASER_PBS",
            LayoutKind::EraserAbsorb => "ERASER_ABSORB",
        }
    }

    pub fn wpi(self) -> Option<WpiKind> {
        match self {
            LayoutKind::BareMzi => None,
            LayoutKind::MziPolWpi | LayoutKind::EraserPbs | LayoutKind::EraserAbsorb => {
                Some(WpiKind::Polarization)
            }
            LayoutKind::MziTimebinWpi | LayoutKind::EraserTimebin => Some(WpiKind::TimeBin),
        }
    }

    pub fn bob(self) -> BobOptics {
        match self {
            LayoutKind::BareMzi | LayoutKind::MziPolWpi | LayoutKind::MziTimebinWpi => {
                BobOptics::Direct
            }
            LayoutKind::EraserTimebin => BobOptics::TimeBinEraser,
            LayoutKind::EraserPbs => BobOptics::PbsEraser,
            LayoutKind::EraserAbsorb => BobOptics::AbsorbEraser,
        }
    }

    /// True when the layout contains an absorbing element.
    pub fn is_lossy(self) -> bool {
        self == LayoutKind::EraserAbsorb
    }
}

impl fmt::Display for LayoutKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LayoutKind {
    type Err = OpticsError;

    fn from_str(s: &str) -> Result<Self> {
        let wanted = s.trim();
        LayoutKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(wanted))
            .ok_or_else(|| OpticsError::UnknownLayout(s.to_string()))
    }
}

/// An element sequence with the source polarization it expects.
#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub kind: LayoutKind,
    pub phi: f64,
    pub source: PolTag,
    pub elements: Vec<OpticalElement>,
}

pub fn build_layout(kind: LayoutKind, phi: f64) -> Layout {
    let wpi = kind.wpi();
    let mut elements = alice_optics(wpi, phi);
    elements.extend(bob_optics(kind.bob()));
    let source = match wpi {
        Some(WpiKind::Polarization) => PolTag::H,
        _ => PolTag::None,
    };
    Layout {
        kind,
        phi,
        source,
        elements,
    }
}

impl Layout {
    pub fn has_polarizing_elements(&self) -> bool {
        self.elements.iter().any(|e| {
            matches!(
                e,
                OpticalElement::PolarizerAbsorb { .. }
                    | OpticalElement::PolarizingBs { .. }
                    | OpticalElement::HalfWavePlate { .. }
            )
        })
    }

    pub fn propagate_from(&self, source: PolTag) -> Result<PhotonState> {
        self.elements
            .iter()
            .try_fold(PhotonState::source(source), |s, e| propagate(&s, e))
    }

    pub fn run(&self) -> Result<DetectionDistribution> {
        Ok(detect(&self.propagate_from(self.source)?))
    }
}

/// Result of an unpolarized-source run.
#[derive(Debug, Clone, PartialEq)]
pub struct UnpolarizedRun {
    pub distribution: DetectionDistribution,
    /// Set when the layout has no polarization-sensitive element, so the
    /// mixture is identical to a single run.
    pub warning: Option<String>,
}

/// Equal mixture of an H-polarized and a V-polarized source.
pub fn unpolarized_run(kind: LayoutKind, phi: f64) -> Result<UnpolarizedRun> {
    let layout = build_layout(kind, phi);
    let h = detect(&layout.propagate_from(PolTag::H)?);
    let v = detect(&layout.propagate_from(PolTag::V)?);
    let warning = (!layout.has_polarizing_elements())
        .then(|| format!("{kind} has no polarizing elements; the unpolarized mixture equals a single run"));
    Ok(UnpolarizedRun {
        distribution: h.mix(&v),
        warning,
    })
}

/// `(max − min)/(max + min)`; zero for an identically dark series.
pub fn visibility(series: &[f64]) -> f64 {
    let max = series.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = series.iter().copied().fold(f64::INFINITY, f64::min);
    // catches NaN and the empty series as well as all-dark
    if max + min <= 0.0 || (max + min).is_nan() {
        return 0.0;
    }
    (max - min) / (max + min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, PI};

    const EPS: f64 = 1e-12;

    fn branch(state: &PhotonState, path: &str, pol: PolTag, t: u32) -> Amplitude {
        state
            .branches
            .get(&(path.to_string(), pol, t))
            .copied()
            .unwrap_or_default()
    }

    #[test]
    fn splitter_halves_single_branch() {
        let s = propagate(
            &PhotonState::source(PolTag::None),
            &OpticalElement::bs(SOURCE_PATH, VACUUM_PATH, "arm1", "arm2"),
        )
        .unwrap();
        assert_eq!(s.branches().count(), 2);
        for b in s.branches() {
            assert!((b.amp.re - FRAC_1_SQRT_2).abs() < EPS && b.amp.im.abs() < EPS);
        }
    }

    #[test]
    fn absorbing_polarizer_passes_half() {
        let s = PhotonState::source(PolTag::H);
        let out = propagate(
            &s,
            &OpticalElement::PolarizerAbsorb {
                path: SOURCE_PATH.into(),
                angle: PolarizerAngle::Deg45,
            },
        )
        .unwrap();
        let b: Vec<_> = out.branches().collect();
        assert_eq!(b.len(), 1);
        assert_eq!(b[0].pol, PolTag::D45);
        assert!((b[0].amp.re - FRAC_1_SQRT_2).abs() < EPS);
        assert!((out.total_probability() - 0.5).abs() < EPS);
    }

    #[test]
    fn polarizing_splitter_decomposes_h_and_v() {
        let pbs = OpticalElement::PolarizingBs {
            input: SOURCE_PATH.into(),
            outputs: ["p".into(), "q".into()],
            angle: PolarizerAngle::Deg45,
        };
        let h = propagate(&PhotonState::source(PolTag::H), &pbs).unwrap();
        assert!((branch(&h, "p", PolTag::D45, 0).re - FRAC_1_SQRT_2).abs() < EPS);
        assert!((branch(&h, "q", PolTag::A135, 0).re - FRAC_1_SQRT_2).abs() < EPS);
        let v = propagate(&PhotonState::source(PolTag::V), &pbs).unwrap();
        assert!((branch(&v, "p", PolTag::D45, 0).re - FRAC_1_SQRT_2).abs() < EPS);
        assert!((branch(&v, "q", PolTag::A135, 0).re + FRAC_1_SQRT_2).abs() < EPS);
        assert!((v.total_probability() - 1.0).abs() < EPS);
    }

    #[test]
    fn half_wave_plate_swaps_h_and_v() {
        let hwp = OpticalElement::HalfWavePlate {
            path: SOURCE_PATH.into(),
        };
        let s = propagate(&PhotonState::source(PolTag::H), &hwp).unwrap();
        assert!((branch(&s, SOURCE_PATH, PolTag::V, 0).re - 1.0).abs() < EPS);
    }

    #[test]
    fn unknown_path_is_rejected() {
        let err = propagate(
            &PhotonState::source(PolTag::H),
            &OpticalElement::Delay { path: "nowhere".into() },
        )
        .unwrap_err();
        assert_eq!(err, OpticsError::UnknownPath("nowhere".into()));
    }

    #[test]
    fn unpolarized_branch_cannot_hit_polarizer() {
        let err = propagate(
            &PhotonState::source(PolTag::None),
            &OpticalElement::PolarizerAbsorb {
                path: SOURCE_PATH.into(),
                angle: PolarizerAngle::Deg0,
            },
        )
        .unwrap_err();
        assert!(matches!(err, OpticsError::Unpolarized { .. }));
    }

    #[test]
    fn non_finite_phase_is_rejected() {
        let err = build_layout(LayoutKind::BareMzi, f64::NAN).run().unwrap_err();
        assert!(matches!(err, OpticsError::NonFinitePhase(_)));
    }

    #[test]
    fn bare_interferometer_second_splitter_amplitudes() {
        let phi = 0.7;
        let layout = build_layout(LayoutKind::BareMzi, phi);
        let s = layout.propagate_from(PolTag::None).unwrap();
        let w = Amplitude::from_polar(1.0, phi);
        let one = Amplitude::new(1.0, 0.0);
        assert!((branch(&s, "D1", PolTag::None, 0) - (one + w) * 0.5).norm() < EPS);
        assert!((branch(&s, "D2", PolTag::None, 0) - (one - w) * 0.5).norm() < EPS);
    }

    #[test]
    fn bare_layout_probabilities() {
        let d = build_layout(LayoutKind::BareMzi, 0.0).run().unwrap();
        assert!((d.prob("D1", 0) - 1.0).abs() < EPS);
        assert!(d.prob("D2", 0).abs() < EPS);
        let d = build_layout(LayoutKind::BareMzi, PI).run().unwrap();
        assert!(d.prob("D1", 0).abs() < EPS);
        assert!((d.prob("D2", 0) - 1.0).abs() < EPS);
    }

    #[test]
    fn wpi_layout_is_flat() {
        for kind in [LayoutKind::MziPolWpi, LayoutKind::MziTimebinWpi] {
            let d = build_layout(kind, 1.1).run().unwrap();
            assert!((d.detector_total("D1") - 0.5).abs() < EPS);
            assert!((d.detector_total("D2") - 0.5).abs() < EPS);
        }
    }

    #[test]
    fn absorb_eraser_at_quarter_turn() {
        let d = build_layout(LayoutKind::EraserAbsorb, FRAC_PI_2).run().unwrap();
        assert!((d.prob("D1", 0) - 0.25).abs() < EPS);
        assert!((d.prob("D2", 0) - 0.25).abs() < EPS);
        assert!((d.absorbed - 0.5).abs() < EPS);
    }

    #[test]
    fn pbs_eraser_ports() {
        let phi = 2.0_f64;
        let p1 = (phi / 2.0).cos().powi(2);
        let p2 = (phi / 2.0).sin().powi(2);
        let d = build_layout(LayoutKind::EraserPbs, phi).run().unwrap();
        assert!((d.prob("D1", 0) - p1 / 2.0).abs() < EPS);
        assert!((d.prob("D2", 0) - p2 / 2.0).abs() < EPS);
        assert!((d.prob("D3", 0) - p2 / 2.0).abs() < EPS);
        assert!((d.prob("D4", 0) - p1 / 2.0).abs() < EPS);
        assert!(d.absorbed.abs() < EPS);
    }

    #[test]
    fn unpolarized_examples() {
        let r = unpolarized_run(LayoutKind::MziPolWpi, 0.4).unwrap();
        assert!(r.warning.is_none());
        assert!((r.distribution.detector_total("D1") - 0.5).abs() < EPS);
        assert!((r.distribution.detector_total("D2") - 0.5).abs() < EPS);

        let r = unpolarized_run(LayoutKind::EraserAbsorb, 0.0).unwrap();
        assert!((r.distribution.prob("D1", 0) - 0.5).abs() < EPS);
        assert!(r.distribution.prob("D2", 0).abs() < EPS);
        assert!((r.distribution.absorbed - 0.5).abs() < EPS);

        let r = unpolarized_run(LayoutKind::EraserPbs, 0.0).unwrap();
        let d = &r.distribution;
        assert!((d.prob("D1", 0) - 0.5).abs() < EPS);
        assert!(d.prob("D2", 0).abs() < EPS);
        assert!(d.prob("D3", 0).abs() < EPS);
        assert!((d.prob("D4", 0) - 0.5).abs() < EPS);

        let r = unpolarized_run(LayoutKind::BareMzi, 0.0).unwrap();
        assert!(r.warning.is_some());
        assert!((r.distribution.prob("D1", 0) - 1.0).abs() < EPS);
    }

    #[test]
    fn layout_names_parse() {
        for kind in LayoutKind::ALL {
            assert_eq!(kind.name().parse::<LayoutKind>().unwrap(), kind);
            assert_eq!(kind.name().to_lowercase().parse::<LayoutKind>().unwrap(), kind);
        }
        assert!("MZI".parse::<LayoutKind>().is_err());
    }

    #[test]
    fn layout_shapes() {
        let bare = build_layout(LayoutKind::BareMzi, 0.3);
        let names: Vec<_> = bare.elements.iter().map(|e| e.name()).collect();
        assert_eq!(names, ["BEAM_SPLITTER", "PHASE", "BEAM_SPLITTER", "RELABEL", "RELABEL"]);
        let pbs = build_layout(LayoutKind::EraserPbs, 0.3);
        assert_eq!(
            pbs.elements
                .iter()
                .filter(|e| matches!(e, OpticalElement::PolarizingBs { .. }))
                .count(),
            2
        );
        let tb = build_layout(LayoutKind::EraserTimebin, 0.3);
        assert_eq!(
            tb.elements
                .iter()
                .filter(|e| matches!(e, OpticalElement::Delay { .. }))
                .count(),
            2
        );
    }

    #[test]
    fn visibility_edges() {
        assert_eq!(visibility(&[0.0, 0.0]), 0.0);
        assert_eq!(visibility(&[0.5, 0.5]), 0.0);
        assert_eq!(visibility(&[0.0, 1.0]), 1.0);
    }
}

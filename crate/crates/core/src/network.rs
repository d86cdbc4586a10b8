//! Power network graph, physical parameters and the matrix operators built
//! from them.
//!
//! Buses are kept sorted by id. Every line is oriented from its lower bus id
//! (positive end) to its higher bus id (negative end), so the incidence
//! matrix and therefore the sign of every edge angle difference is fully
//! determined by the file contents.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::controller::{ClassK, ControlLaw, ControlledBusSpec};
use crate::error::{Error, Result};

/// Unit used for frequency-valued quantities in a network or scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum FrequencyUnit {
    #[serde(rename = "hz")]
    Hz,
    #[default]
    #[serde(rename = "rad_s")]
    RadS,
}

impl FrequencyUnit {
    /// Factor converting a value in this unit to rad/s.
    pub fn to_rad_s(self) -> f64 {
        match self {
            FrequencyUnit::Hz => 2.0 * PI,
            FrequencyUnit::RadS => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    #[default]
    Load,
    Generator,
}

/// Shape of an injection inside one schedule window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Fixed value (per-unit).
    Constant(f64),
    /// `(1 + amplitude_frac * sin(2 pi t / period)) * base`.
    Sinusoid { amplitude_frac: f64, period: f64 },
}

/// Half-open window `[start, end)` carrying a profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSegment {
    pub start: f64,
    pub end: f64,
    #[serde(flatten)]
    pub profile: Profile,
}

/// Active power injection of a bus: a base value, optionally overridden on
/// time windows. The first window containing `t` wins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub base: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<ScheduleSegment>,
}

impl Injection {
    pub fn constant(base: f64) -> Self {
        Self {
            base,
            segments: Vec::new(),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        for seg in &self.segments {
            if t >= seg.start && t < seg.end {
                return match seg.profile {
                    Profile::Constant(v) => v,
                    Profile::Sinusoid {
                        amplitude_frac,
                        period,
                    } => (1.0 + amplitude_frac * (2.0 * PI * t / period).sin()) * self.base,
                };
            }
        }
        self.base
    }

    pub fn is_constant(&self) -> bool {
        self.segments.is_empty()
    }

    /// Upper bound on `|p(t)|` over all time.
    pub fn max_abs(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| match s.profile {
                Profile::Constant(v) => v.abs(),
                Profile::Sinusoid { amplitude_frac, .. } => {
                    (1.0 + amplitude_frac.abs()) * self.base.abs()
                }
            })
            .fold(self.base.abs(), f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: u32,
    /// M_i, per-unit power * s / (rad/s).
    pub inertia: f64,
    /// E_i, per-unit power / (rad/s).
    pub damping: f64,
    pub injection: Injection,
    pub kind: BusKind,
}

/// Line oriented from `from` (positive end, lower id) to `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionLine {
    pub from: u32,
    pub to: u32,
    pub susceptance: f64,
}

/// Immutable network description plus cached graph operators.
#[derive(Debug, Clone)]
pub struct PowerNetwork {
    name: Option<String>,
    buses: Vec<Bus>,
    lines: Vec<TransmissionLine>,
    controlled: Vec<ControlledBusSpec>,
    index_of: HashMap<u32, usize>,
    /// (positive-end index, negative-end index) per line.
    ends: Vec<(usize, usize)>,
    /// Per bus: (line index, incidence sign).
    incident: Vec<Vec<(usize, f64)>>,
    /// Cholesky factor of the unweighted Laplacian with the last bus removed.
    range_factor: Cholesky<f64, Dyn>,
}

impl PartialEq for PowerNetwork {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.buses == other.buses
            && self.lines == other.lines
            && self.controlled == other.controlled
    }
}

impl PowerNetwork {
    /// Validates and assembles a network. Buses may arrive in any order.
    pub fn new(
        name: Option<String>,
        mut buses: Vec<Bus>,
        lines: Vec<TransmissionLine>,
        controlled: Vec<ControlledBusSpec>,
    ) -> Result<Self> {
        if buses.len() < 2 {
            return Err(Error::Validation("network needs at least two buses".into()));
        }
        buses.sort_by_key(|b| b.id);
        let mut index_of = HashMap::with_capacity(buses.len());
        for (k, bus) in buses.iter().enumerate() {
            if index_of.insert(bus.id, k).is_some() {
                return Err(Error::Validation(format!("duplicate bus id {}", bus.id)));
            }
            if !(bus.inertia > 0.0 && bus.inertia.is_finite()) {
                return Err(Error::Validation(format!(
                    "bus {}: inertia must be positive, got {}",
                    bus.id, bus.inertia
                )));
            }
            if !(bus.damping > 0.0 && bus.damping.is_finite()) {
                return Err(Error::Validation(format!(
                    "bus {}: damping must be positive, got {}",
                    bus.id, bus.damping
                )));
            }
            for seg in &bus.injection.segments {
                if !(seg.end > seg.start) {
                    return Err(Error::Validation(format!(
                        "bus {}: empty schedule window [{}, {})",
                        bus.id, seg.start, seg.end
                    )));
                }
                if let Profile::Sinusoid { period, .. } = seg.profile {
                    if !(period > 0.0) {
                        return Err(Error::Validation(format!(
                            "bus {}: sinusoid period must be positive",
                            bus.id
                        )));
                    }
                }
            }
        }

        let mut seen = std::collections::HashSet::new();
        let mut normalized = Vec::with_capacity(lines.len());
        let mut ends = Vec::with_capacity(lines.len());
        for line in lines {
            if line.from == line.to {
                return Err(Error::Validation(format!("self loop at bus {}", line.from)));
            }
            if !(line.susceptance > 0.0 && line.susceptance.is_finite()) {
                return Err(Error::Validation(format!(
                    "line ({}, {}): susceptance must be positive, got {}",
                    line.from, line.to, line.susceptance
                )));
            }
            let (lo, hi) = if line.from < line.to {
                (line.from, line.to)
            } else {
                (line.to, line.from)
            };
            if !seen.insert((lo, hi)) {
                return Err(Error::Validation(format!("duplicate line ({lo}, {hi})")));
            }
            let a = *index_of
                .get(&lo)
                .ok_or_else(|| Error::Validation(format!("line references unknown bus {lo}")))?;
            let b = *index_of
                .get(&hi)
                .ok_or_else(|| Error::Validation(format!("line references unknown bus {hi}")))?;
            normalized.push(TransmissionLine {
                from: lo,
                to: hi,
                susceptance: line.susceptance,
            });
            ends.push((a, b));
        }

        let n = buses.len();
        let mut incident = vec![Vec::new(); n];
        for (k, &(a, b)) in ends.iter().enumerate() {
            incident[a].push((k, 1.0));
            incident[b].push((k, -1.0));
        }
        if !is_connected(n, &ends) {
            return Err(Error::Validation("network graph is disconnected".into()));
        }

        let mut specs = Vec::with_capacity(controlled.len());
        for mut spec in controlled {
            let idx = *index_of.get(&spec.bus_id).ok_or_else(|| {
                Error::Validation(format!("controlled bus {} is not in the network", spec.bus_id))
            })?;
            spec.index = idx;
            spec.validate()?;
            if specs.iter().any(|s: &ControlledBusSpec| s.bus_id == spec.bus_id) {
                return Err(Error::Validation(format!(
                    "bus {} listed twice as controlled",
                    spec.bus_id
                )));
            }
            specs.push(spec);
        }
        specs.sort_by_key(|s| s.bus_id);

        let mut reduced = DMatrix::zeros(n - 1, n - 1);
        for &(a, b) in &ends {
            for (r, c, v) in [(a, a, 1.0), (b, b, 1.0), (a, b, -1.0), (b, a, -1.0)] {
                if r < n - 1 && c < n - 1 {
                    reduced[(r, c)] += v;
                }
            }
        }
        let range_factor = Cholesky::new(reduced).ok_or(Error::Singularity(2))?;

        Ok(Self {
            name,
            buses,
            lines: normalized,
            controlled: specs,
            index_of,
            ends,
            incident,
            range_factor,
        })
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn n(&self) -> usize {
        self.buses.len()
    }

    pub fn m(&self) -> usize {
        self.lines.len()
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn lines(&self) -> &[TransmissionLine] {
        &self.lines
    }

    pub fn controlled(&self) -> &[ControlledBusSpec] {
        &self.controlled
    }

    pub fn controlled_spec(&self, bus_id: u32) -> Option<&ControlledBusSpec> {
        self.controlled.iter().find(|s| s.bus_id == bus_id)
    }

    pub fn index_of(&self, bus_id: u32) -> Option<usize> {
        self.index_of.get(&bus_id).copied()
    }

    /// Bus index pair (positive end, negative end) of every line.
    pub fn line_ends(&self) -> &[(usize, usize)] {
        &self.ends
    }

    /// Lines touching bus `idx` with their incidence sign.
    pub fn incident(&self, idx: usize) -> &[(usize, f64)] {
        &self.incident[idx]
    }

    pub fn susceptances(&self) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.lines.iter().map(|l| l.susceptance))
    }

    pub fn inertias(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.buses.iter().map(|b| b.inertia))
    }

    pub fn dampings(&self) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.buses.iter().map(|b| b.damping))
    }

    /// Injection vector p(t).
    pub fn injections_at(&self, t: f64) -> DVector<f64> {
        DVector::from_iterator(self.n(), self.buses.iter().map(|b| b.injection.at(t)))
    }

    pub fn has_constant_injections(&self) -> bool {
        self.buses.iter().all(|b| b.injection.is_constant())
    }

    /// Copy of the network with replaced injections.
    pub fn with_injections(&self, injections: Vec<(u32, Injection)>) -> Result<Self> {
        let mut out = self.clone();
        for (id, inj) in injections {
            let idx = self
                .index_of(id)
                .ok_or_else(|| Error::Validation(format!("schedule references unknown bus {id}")))?;
            out.buses[idx].injection = inj;
        }
        Ok(out)
    }

    /// Copy of the network with replaced controller specs.
    pub fn with_controlled(&self, controlled: Vec<ControlledBusSpec>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.buses.clone(),
            self.lines.clone(),
            controlled,
        )
    }

    /// Incidence matrix D (m x n).
    pub fn incidence_matrix(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.m(), self.n());
        for (k, &(a, b)) in self.ends.iter().enumerate() {
            d[(k, a)] = 1.0;
            d[(k, b)] = -1.0;
        }
        d
    }

    /// Weighted Laplacian L = D^T Y_b D.
    pub fn weighted_laplacian(&self) -> DMatrix<f64> {
        let mut l = DMatrix::zeros(self.n(), self.n());
        for (line, &(a, b)) in self.lines.iter().zip(&self.ends) {
            let w = line.susceptance;
            l[(a, a)] += w;
            l[(b, b)] += w;
            l[(a, b)] -= w;
            l[(b, a)] -= w;
        }
        l
    }

    /// D x for a bus vector x.
    pub fn edge_differences(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(self.m(), self.ends.iter().map(|&(a, b)| x[a] - x[b]))
    }

    /// D^T Y_b y for an edge vector y.
    pub fn nodal_sum(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n());
        for (k, (line, &(a, b))) in self.lines.iter().zip(&self.ends).enumerate() {
            let f = line.susceptance * y[k];
            out[a] += f;
            out[b] -= f;
        }
        out
    }

    /// [D^T Y_b]_i sin(lambda): net power flowing out of bus `idx`.
    pub fn outflow(&self, idx: usize, lambda: &DVector<f64>) -> f64 {
        self.incident[idx]
            .iter()
            .map(|&(k, s)| s * self.lines[k].susceptance * lambda[k].sin())
            .sum()
    }

    /// Reduced angles theta (last bus pinned to zero) such that D theta is
    /// the least-squares projection of `lambda` onto range(D).
    pub fn angles_from_edges(&self, lambda: &DVector<f64>) -> DVector<f64> {
        let n = self.n();
        let mut rhs = DVector::zeros(n);
        for (k, &(a, b)) in self.ends.iter().enumerate() {
            rhs[a] += lambda[k];
            rhs[b] -= lambda[k];
        }
        let reduced = self.range_factor.solve(&rhs.rows(0, n - 1).into_owned());
        let mut theta = DVector::zeros(n);
        theta.rows_mut(0, n - 1).copy_from(&reduced);
        theta
    }

    /// Orthogonal projection of `lambda` onto range(D).
    pub fn project_to_range(&self, lambda: &DVector<f64>) -> DVector<f64> {
        self.edge_differences(&self.angles_from_edges(lambda))
    }

    /// ||(I - D D^+) lambda||_inf.
    pub fn range_residual(&self, lambda: &DVector<f64>) -> f64 {
        (lambda - self.project_to_range(lambda)).amax()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        load_network(path)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: NetworkFile =
            serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        file.into_network()
    }

    /// Serialises the network in rad/s units; reloading yields an equal
    /// network.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&NetworkFile::from_network(self))
            .expect("network serialisation cannot fail")
    }
}

fn is_connected(n: usize, ends: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(a, b) in ends {
        adj[a].push(b);
        adj[b].push(a);
    }
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([0usize]);
    seen[0] = true;
    let mut count = 1;
    while let Some(v) = queue.pop_front() {
        for &w in &adj[v] {
            if !seen[w] {
                seen[w] = true;
                count += 1;
                queue.push_back(w);
            }
        }
    }
    count == n
}

/// Reads and validates a network description file.
pub fn load_network(path: impl AsRef<Path>) -> Result<PowerNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    PowerNetwork::from_json(&text)
}

/// Bundled 39-bus New England approximation.
pub fn ieee39() -> PowerNetwork {
    PowerNetwork::from_json(include_str!("../data/ieee39.json")).expect("bundled dataset is valid")
}

/// Bundled two-bus example.
pub fn two_bus() -> PowerNetwork {
    PowerNetwork::from_json(include_str!("../data/two_bus.json")).expect("bundled dataset is valid")
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
    #[serde(default)]
    frequency_unit: FrequencyUnit,
    buses: Vec<BusRecord>,
    lines: Vec<LineRecord>,
    #[serde(default)]
    controlled: Vec<ControlledRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BusRecord {
    id: u32,
    #[serde(rename = "M")]
    inertia: f64,
    #[serde(rename = "E")]
    damping: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_schedule: Option<Injection>,
    #[serde(default)]
    kind: BusKind,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LineRecord {
    from: u32,
    to: u32,
    b: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ControlledRecord {
    id: u32,
    omega_lo: f64,
    omega_hi: f64,
    omega_lo_th: f64,
    omega_hi_th: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma: Option<f64>,
    /// Monotone (s, alpha(s)) samples for the upper class-K function.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa_upper: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kappa_lower: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon_shrink: Option<f64>,
    #[serde(default, skip_serializing_if = "is_barrier")]
    law: ControlLaw,
}

fn is_barrier(law: &ControlLaw) -> bool {
    *law == ControlLaw::Barrier
}

impl NetworkFile {
    fn into_network(self) -> Result<PowerNetwork> {
        let scale = self.frequency_unit.to_rad_s();
        let mut buses = Vec::with_capacity(self.buses.len());
        for rec in self.buses {
            let injection = match (rec.p, rec.p_schedule) {
                (Some(p), None) => Injection::constant(p),
                (None, Some(s)) => s,
                (None, None) => {
                    return Err(Error::Parse(format!("bus {}: missing p or p_schedule", rec.id)))
                }
                (Some(_), Some(_)) => {
                    return Err(Error::Parse(format!(
                        "bus {}: give either p or p_schedule, not both",
                        rec.id
                    )))
                }
            };
            buses.push(Bus {
                id: rec.id,
                inertia: rec.inertia,
                damping: rec.damping,
                injection,
                kind: rec.kind,
            });
        }
        let lines = self
            .lines
            .into_iter()
            .map(|l| TransmissionLine {
                from: l.from,
                to: l.to,
                susceptance: l.b,
            })
            .collect();
        let mut controlled = Vec::with_capacity(self.controlled.len());
        for rec in self.controlled {
            let kappa = |table: Option<Vec<[f64; 2]>>| -> Result<ClassK> {
                match (table, rec.gamma) {
                    (Some(points), _) => ClassK::table(
                        points.into_iter().map(|[s, a]| (s * scale, a * scale)).collect(),
                    ),
                    (None, Some(g)) => ClassK::linear(g),
                    (None, None) => Err(Error::Parse(format!(
                        "controlled bus {}: need gamma or a kappa table",
                        rec.id
                    ))),
                }
            };
            controlled.push(ControlledBusSpec {
                bus_id: rec.id,
                index: 0,
                omega_lo: rec.omega_lo * scale,
                omega_hi: rec.omega_hi * scale,
                omega_lo_th: rec.omega_lo_th * scale,
                omega_hi_th: rec.omega_hi_th * scale,
                kappa_upper: kappa(rec.kappa_upper.clone())?,
                kappa_lower: kappa(rec.kappa_lower.clone())?,
                epsilon_shrink: rec.epsilon_shrink.unwrap_or(0.0) * scale,
                law: rec.law,
            });
        }
        PowerNetwork::new(self.name, buses, lines, controlled)
    }

    fn from_network(net: &PowerNetwork) -> Self {
        let buses = net
            .buses
            .iter()
            .map(|b| BusRecord {
                id: b.id,
                inertia: b.inertia,
                damping: b.damping,
                p: b.injection.is_constant().then_some(b.injection.base),
                p_schedule: (!b.injection.is_constant()).then(|| b.injection.clone()),
                kind: b.kind,
            })
            .collect();
        let lines = net
            .lines
            .iter()
            .map(|l| LineRecord {
                from: l.from,
                to: l.to,
                b: l.susceptance,
            })
            .collect();
        let controlled = net
            .controlled
            .iter()
            .map(|s| {
                let (gamma, upper, lower) = match (&s.kappa_upper, &s.kappa_lower) {
                    (ClassK::Linear { gamma: gu }, ClassK::Linear { gamma: gl }) if gu == gl => {
                        (Some(*gu), None, None)
                    }
                    (u, l) => (None, Some(u.to_points()), Some(l.to_points())),
                };
                ControlledRecord {
                    id: s.bus_id,
                    omega_lo: s.omega_lo,
                    omega_hi: s.omega_hi,
                    omega_lo_th: s.omega_lo_th,
                    omega_hi_th: s.omega_hi_th,
                    gamma,
                    kappa_upper: upper,
                    kappa_lower: lower,
                    epsilon_shrink: (s.epsilon_shrink != 0.0).then_some(s.epsilon_shrink),
                    law: s.law,
                }
            })
            .collect();
        NetworkFile {
            name: net.name.clone(),
            notes: None,
            frequency_unit: FrequencyUnit::RadS,
            buses,
            lines,
            controlled,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(id: u32, p: f64) -> Bus {
        Bus {
            id,
            inertia: 1.0,
            damping: 1.0,
            injection: Injection::constant(p),
            kind: BusKind::Load,
        }
    }

    fn line(from: u32, to: u32, b: f64) -> TransmissionLine {
        TransmissionLine {
            from,
            to,
            susceptance: b,
        }
    }

    fn triangle(b: [f64; 3]) -> PowerNetwork {
        PowerNetwork::new(
            None,
            vec![bus(1, 0.0), bus(2, 0.0), bus(3, 0.0)],
            vec![line(1, 2, b[0]), line(2, 3, b[1]), line(1, 3, b[2])],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn two_bus_incidence_and_laplacian() {
        let net = two_bus();
        assert_eq!((net.n(), net.m()), (2, 1));
        assert_eq!(net.incidence_matrix(), DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        assert_eq!(
            net.weighted_laplacian(),
            DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0])
        );
    }

    #[test]
    fn orientation_follows_lower_id() {
        let net = PowerNetwork::new(None, vec![bus(5, 0.0), bus(2, 0.0)], vec![line(5, 2, 1.0)], vec![])
            .unwrap();
        assert_eq!(net.lines()[0].from, 2);
        let d = net.incidence_matrix();
        // bus 2 sits at index 0 after sorting
        assert_eq!(d[(0, 0)], 1.0);
        assert_eq!(d[(0, 1)], -1.0);
    }

    #[test]
    fn triangle_rows_sum_to_zero() {
        let d = triangle([1.0, 1.0, 1.0]).incidence_matrix();
        for row in d.row_iter() {
            assert_eq!(row.sum(), 0.0);
        }
    }

    #[test]
    fn laplacian_matches_outer_product_sum() {
        let net = triangle([1.0, 2.0, 3.0]);
        let d = net.incidence_matrix();
        let mut brute = DMatrix::zeros(3, 3);
        for (k, b) in [1.0, 2.0, 3.0].iter().enumerate() {
            let dk = d.row(k).transpose();
            brute += *b * &dk * dk.transpose();
        }
        assert!((net.weighted_laplacian() - brute).amax() < 1e-14);
    }

    #[test]
    fn disconnected_network_rejected() {
        let err = PowerNetwork::new(
            None,
            vec![bus(1, 0.0), bus(2, 0.0), bus(3, 0.0)],
            vec![line(1, 2, 1.0)],
            vec![],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Validation(ref m) if m.contains("disconnected")));
    }

    #[test]
    fn bad_parameters_rejected() {
        let mut b = bus(1, 0.0);
        b.inertia = 0.0;
        assert!(PowerNetwork::new(None, vec![b, bus(2, 0.0)], vec![line(1, 2, 1.0)], vec![]).is_err());
        assert!(PowerNetwork::new(None, vec![bus(1, 0.0), bus(2, 0.0)], vec![line(1, 2, -1.0)], vec![])
            .is_err());
        assert!(PowerNetwork::new(
            None,
            vec![bus(1, 0.0), bus(2, 0.0)],
            vec![line(1, 2, 1.0), line(2, 1, 2.0)],
            vec![]
        )
        .is_err());
    }

    #[test]
    fn unknown_controlled_bus_rejected() {
        let text = r#"{"frequency_unit":"rad_s","buses":[{"id":1,"M":1,"E":1,"p":0},{"id":2,"M":1,"E":1,"p":0}],
            "lines":[{"from":1,"to":2,"b":1}],
            "controlled":[{"id":7,"omega_lo":-1,"omega_hi":1,"omega_lo_th":-0.5,"omega_hi_th":0.5,"gamma":1}]}"#;
        assert!(matches!(PowerNetwork::from_json(text), Err(Error::Validation(_))));
    }

    #[test]
    fn malformed_json_is_parse_error() {
        assert!(matches!(PowerNetwork::from_json("{\"buses\": ["), Err(Error::Parse(_))));
    }

    #[test]
    fn hz_bounds_are_converted() {
        let net = ieee39();
        let spec = net.controlled_spec(30).unwrap();
        assert!((spec.omega_hi - 0.2 * 2.0 * PI).abs() < 1e-12);
        assert!((spec.omega_lo_th + 0.1 * 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn range_projection_of_edge_differences_is_identity() {
        let net = ieee39();
        let theta = DVector::from_fn(net.n(), |i, _| (i as f64 * 0.37).sin());
        let lambda = net.edge_differences(&theta);
        assert!(net.range_residual(&lambda) < 1e-12);
        // a cycle-space perturbation is removed
        let mut bumped = lambda.clone();
        bumped[0] += 0.1;
        assert!(net.range_residual(&bumped) > 1e-3);
    }

    #[test]
    fn schedule_windows() {
        let inj = Injection {
            base: -2.0,
            segments: vec![
                ScheduleSegment {
                    start: 0.0,
                    end: 30.0,
                    profile: Profile::Sinusoid {
                        amplitude_frac: 0.3,
                        period: 60.0,
                    },
                },
                ScheduleSegment {
                    start: 40.0,
                    end: 50.0,
                    profile: Profile::Constant(0.0),
                },
            ],
        };
        assert!((inj.at(15.0) - (-2.6)).abs() < 1e-12);
        assert_eq!(inj.at(30.0), -2.0);
        assert_eq!(inj.at(45.0), 0.0);
        assert!((inj.max_abs() - 2.6).abs() < 1e-12);
    }
}

//! Radial distribution network: file schema, validation and topology queries.
//!
//! Impedances and squared-current limits are per-unit on the `base_mva`
//! declared in the header; loads and microturbine ratings are in MW. The
//! header voltage limits are magnitudes in per-unit and are stored squared,
//! since the dispatch model works with squared voltages.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HOURS: usize = 24;
pub const DEFAULT_REACTIVE_RATIO: f64 = 0.3;
pub const DEFAULT_V_MIN_PU: f64 = 0.90;
pub const DEFAULT_V_MAX_PU: f64 = 1.10;

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("graph not radial: {0}")]
    NotRadial(String),
    #[error("unknown line id {0}")]
    UnknownLine(usize),
    #[error("unknown bus id {0}")]
    UnknownBus(usize),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    SubstationRoot,
    Load,
    Microturbine,
    Junction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Header {
    pub base_mva: f64,
    #[serde(default = "default_v_min")]
    pub v_min_pu: f64,
    #[serde(default = "default_v_max")]
    pub v_max_pu: f64,
}

fn default_v_min() -> f64 {
    DEFAULT_V_MIN_PU
}

fn default_v_max() -> f64 {
    DEFAULT_V_MAX_PU
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: usize,
    pub kind: BusKind,
    /// Active demand per hour in MW.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub load_profile: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reactive_ratio: Option<f64>,
}

impl Bus {
    pub fn demand_mw(&self, hour: usize) -> f64 {
        self.load_profile.as_ref().map_or(0.0, |p| p[hour])
    }

    pub fn q_ratio(&self) -> f64 {
        self.reactive_ratio.unwrap_or(DEFAULT_REACTIVE_RATIO)
    }

    pub fn has_load(&self) -> bool {
        self.load_profile
            .as_ref()
            .is_some_and(|p| p.iter().any(|&x| x > 0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Line {
    pub id: usize,
    pub from: usize,
    pub to: usize,
    pub r_pu: f64,
    pub x_pu: f64,
    pub length_mi: f64,
    pub ampacity_sq_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Microturbine {
    pub bus: usize,
    pub p_max_mw: f64,
    pub ramp_up_mw: f64,
    /// Non-positive: the largest allowed hourly decrease, as a negative number.
    pub ramp_down_mw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NetworkFile {
    header: Header,
    buses: Vec<Bus>,
    lines: Vec<Line>,
    #[serde(default)]
    microturbines: Vec<Microturbine>,
}

/// Validated radial network. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub header: Header,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub microturbines: Vec<Microturbine>,
    root: usize,
    bus_pos: HashMap<usize, usize>,
    line_pos: HashMap<usize, usize>,
    /// Per line (by position): (upstream bus position, downstream bus position).
    oriented: Vec<(usize, usize)>,
    /// Per bus position: position of the line feeding it (None for the root).
    parent_line: Vec<Option<usize>>,
    /// Per bus position: positions of lines leaving it away from the root.
    child_lines: Vec<Vec<usize>>,
}

fn invalid(msg: impl Into<String>) -> NetworkError {
    NetworkError::Invalid(msg.into())
}

impl Network {
    pub fn from_json(text: &str) -> Result<Self, NetworkError> {
        let file: NetworkFile = serde_json::from_str(text).map_err(|e| NetworkError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_parts(file.header, file.buses, file.lines, file.microturbines)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| NetworkError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Canonical JSON text (pretty-printed, trailing newline).
    pub fn to_json(&self) -> String {
        let file = NetworkFile {
            header: self.header.clone(),
            buses: self.buses.clone(),
            lines: self.lines.clone(),
            microturbines: self.microturbines.clone(),
        };
        let mut s = serde_json::to_string_pretty(&file).expect("network serializes");
        s.push('\n');
        s
    }

    pub fn from_parts(
        header: Header,
        buses: Vec<Bus>,
        lines: Vec<Line>,
        microturbines: Vec<Microturbine>,
    ) -> Result<Self, NetworkError> {
        if !(header.base_mva.is_finite() && header.base_mva > 0.0) {
            return Err(invalid("base_mva must be positive"));
        }
        let (vmin, vmax) = (header.v_min_pu, header.v_max_pu);
        if !(vmin.is_finite() && vmax.is_finite() && 0.0 < vmin && vmin <= 1.0 && 1.0 <= vmax) {
            return Err(invalid(format!(
                "voltage limits must satisfy 0 < v_min <= 1 <= v_max, got [{vmin}, {vmax}]"
            )));
        }

        let mut bus_pos = HashMap::new();
        let mut roots = Vec::new();
        for (k, b) in buses.iter().enumerate() {
            if bus_pos.insert(b.id, k).is_some() {
                return Err(invalid(format!("duplicate bus id {}", b.id)));
            }
            if b.kind == BusKind::SubstationRoot {
                roots.push(k);
            }
            if let Some(p) = &b.load_profile {
                if p.len() != HOURS {
                    return Err(invalid(format!(
                        "bus {}: load_profile has {} values, expected {HOURS}",
                        b.id,
                        p.len()
                    )));
                }
                if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
                    return Err(invalid(format!("bus {}: load_profile values must be >= 0", b.id)));
                }
                if b.kind == BusKind::SubstationRoot && p.iter().any(|&x| x > 0.0) {
                    return Err(invalid(format!("bus {}: the substation root carries no load", b.id)));
                }
            }
            if let Some(q) = b.reactive_ratio {
                if !(q.is_finite() && q >= 0.0) {
                    return Err(invalid(format!("bus {}: reactive_ratio must be >= 0", b.id)));
                }
            }
        }
        let root = match roots.as_slice() {
            [r] => *r,
            _ => {
                return Err(invalid(format!(
                    "exactly one substation-root bus required, found {}",
                    roots.len()
                )))
            }
        };

        let mut line_pos = HashMap::new();
        for (k, l) in lines.iter().enumerate() {
            if line_pos.insert(l.id, k).is_some() {
                return Err(invalid(format!("duplicate line id {}", l.id)));
            }
            for end in [l.from, l.to] {
                if !bus_pos.contains_key(&end) {
                    return Err(invalid(format!("line {}: endpoint bus {end} does not exist", l.id)));
                }
            }
            if l.from == l.to {
                return Err(NetworkError::NotRadial(format!("line {} is a self-loop", l.id)));
            }
            let checks = [
                (l.r_pu > 0.0, "resistance must be > 0"),
                (l.x_pu >= 0.0, "reactance must be >= 0"),
                (l.length_mi > 0.0, "length must be > 0"),
                (l.ampacity_sq_pu > 0.0, "ampacity_sq must be > 0"),
            ];
            for (ok, msg) in checks {
                if !ok {
                    return Err(invalid(format!("line {}: {msg}", l.id)));
                }
            }
            if ![l.r_pu, l.x_pu, l.length_mi, l.ampacity_sq_pu].iter().all(|v| v.is_finite()) {
                return Err(invalid(format!("line {}: non-finite parameter", l.id)));
            }
        }
        if lines.len() + 1 != buses.len() {
            return Err(NetworkError::NotRadial(format!(
                "{} lines for {} buses (a tree needs buses - 1)",
                lines.len(),
                buses.len()
            )));
        }

        let mut seen_mt = BTreeSet::new();
        for mt in &microturbines {
            if !bus_pos.contains_key(&mt.bus) {
                return Err(invalid(format!("microturbine at unknown bus {}", mt.bus)));
            }
            if !seen_mt.insert(mt.bus) {
                return Err(invalid(format!("two microturbines at bus {}", mt.bus)));
            }
            let ok = mt.p_max_mw >= 0.0
                && mt.ramp_up_mw >= 0.0
                && mt.ramp_down_mw <= 0.0
                && [mt.p_max_mw, mt.ramp_up_mw, mt.ramp_down_mw].iter().all(|v| v.is_finite());
            if !ok {
                return Err(invalid(format!(
                    "microturbine at bus {}: need p_max >= 0 and ramp_up >= 0 >= ramp_down",
                    mt.bus
                )));
            }
        }

        // Orient every line away from the root by breadth-first search.
        let nb = buses.len();
        let mut incident: Vec<Vec<usize>> = vec![Vec::new(); nb];
        for (k, l) in lines.iter().enumerate() {
            incident[bus_pos[&l.from]].push(k);
            incident[bus_pos[&l.to]].push(k);
        }
        let mut oriented = vec![(usize::MAX, usize::MAX); lines.len()];
        let mut parent_line = vec![None; nb];
        let mut child_lines = vec![Vec::new(); nb];
        let mut visited = vec![false; nb];
        visited[root] = true;
        let mut queue = VecDeque::from([root]);
        while let Some(b) = queue.pop_front() {
            for &k in &incident[b] {
                if Some(k) == parent_line[b] {
                    continue;
                }
                let (f, t) = (bus_pos[&lines[k].from], bus_pos[&lines[k].to]);
                let other = if f == b { t } else { f };
                if visited[other] {
                    return Err(NetworkError::NotRadial(format!("cycle through line {}", lines[k].id)));
                }
                visited[other] = true;
                oriented[k] = (b, other);
                parent_line[other] = Some(k);
                child_lines[b].push(k);
                queue.push_back(other);
            }
        }
        if let Some(k) = visited.iter().position(|v| !v) {
            return Err(NetworkError::NotRadial(format!(
                "bus {} is not connected to the root",
                buses[k].id
            )));
        }

        Ok(Self {
            header,
            buses,
            lines,
            microturbines,
            root,
            bus_pos,
            line_pos,
            oriented,
            parent_line,
            child_lines,
        })
    }

    /// Squared lower voltage limit.
    pub fn v_lo(&self) -> f64 {
        self.header.v_min_pu * self.header.v_min_pu
    }

    /// Squared upper voltage limit.
    pub fn v_hi(&self) -> f64 {
        self.header.v_max_pu * self.header.v_max_pu
    }

    pub fn base_mva(&self) -> f64 {
        self.header.base_mva
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn bus_position(&self, id: usize) -> Result<usize, NetworkError> {
        self.bus_pos.get(&id).copied().ok_or(NetworkError::UnknownBus(id))
    }

    pub fn line_position(&self, id: usize) -> Result<usize, NetworkError> {
        self.line_pos.get(&id).copied().ok_or(NetworkError::UnknownLine(id))
    }

    /// `(upstream, downstream)` bus positions of the line at position `k`.
    pub fn endpoints(&self, k: usize) -> (usize, usize) {
        self.oriented[k]
    }

    pub fn parent_line(&self, bus: usize) -> Option<usize> {
        self.parent_line[bus]
    }

    pub fn child_lines(&self, bus: usize) -> &[usize] {
        &self.child_lines[bus]
    }

    /// Bus ids whose root path traverses line `line_id`.
    pub fn downstream_buses(&self, line_id: usize) -> Result<BTreeSet<usize>, NetworkError> {
        let k = self.line_position(line_id)?;
        Ok(self
            .downstream_positions(k)
            .into_iter()
            .map(|b| self.buses[b].id)
            .collect())
    }

    /// Bus positions below the line at position `k`.
    pub fn downstream_positions(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![self.oriented[k].1];
        while let Some(b) = stack.pop() {
            out.push(b);
            stack.extend(self.child_lines[b].iter().map(|&c| self.oriented[c].1));
        }
        out.sort_unstable();
        out
    }

    pub fn microturbine_at(&self, bus_pos: usize) -> Option<&Microturbine> {
        let id = self.buses[bus_pos].id;
        self.microturbines.iter().find(|m| m.bus == id)
    }

    /// Total demand over the day in MWh.
    pub fn total_daily_energy_mwh(&self) -> f64 {
        self.buses
            .iter()
            .map(|b| (0..HOURS).map(|h| b.demand_mw(h)).sum::<f64>())
            .sum()
    }
}

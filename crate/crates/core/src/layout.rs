//! Ship layout as a compartment graph.
//!
//! Compartments are nodes, passages are undirected weighted edges, and safety
//! equipment is placed inside compartments. The layout is immutable once
//! built; every query borrows it, so one layout can back many sessions.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap, HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Two route lengths closer than this are treated as equal.
const LENGTH_EPSILON: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CompartmentId(pub String);

impl CompartmentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CompartmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for CompartmentId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EquipmentId(pub String);

impl EquipmentId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for EquipmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for EquipmentId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompartmentKind {
    Galley,
    EngineRoom,
    Corridor,
    Cabin,
    Bridge,
    Deck,
    MusterArea,
}

impl CompartmentKind {
    /// Spaces where fires are expected and extinguishers are mandatory.
    pub fn is_fire_prone(self) -> bool {
        matches!(self, CompartmentKind::Galley | CompartmentKind::EngineRoom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EquipmentKind {
    Extinguisher,
    AlarmCallPoint,
    EmergencyPhone,
}

impl fmt::Display for EquipmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EquipmentKind::Extinguisher => "extinguisher",
            EquipmentKind::AlarmCallPoint => "alarm_call_point",
            EquipmentKind::EmergencyPhone => "emergency_phone",
        })
    }
}

/// A node of the ship graph. `x`/`y` are plan coordinates in meters, used
/// only for drawing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Compartment {
    pub id: CompartmentId,
    pub kind: CompartmentKind,
    #[serde(rename = "name")]
    pub display_name: String,
    pub x: f64,
    pub y: f64,
}

/// An undirected connection between two compartments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Passage {
    pub from: CompartmentId,
    pub to: CompartmentId,
    pub length_m: f64,
    #[serde(rename = "signage")]
    pub has_escape_signage: bool,
}

impl Passage {
    /// `"a--b"` with endpoints in id order; used as a stable subject label.
    pub fn label(&self) -> String {
        let (a, b) = if self.from <= self.to {
            (&self.from, &self.to)
        } else {
            (&self.to, &self.from)
        };
        format!("{a}--{b}")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Equipment {
    pub id: EquipmentId,
    pub kind: EquipmentKind,
    pub compartment: CompartmentId,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LayoutError {
    #[error("unknown compartment `{0}`")]
    UnknownCompartment(CompartmentId),
    #[error("unknown equipment `{0}`")]
    UnknownEquipment(EquipmentId),
    #[error("no signed escape route from `{0}` to any muster area")]
    NoEscapeRoute(CompartmentId),
    #[error("no route from `{from}` to `{to}`")]
    NoRoute { from: CompartmentId, to: CompartmentId },
    #[error("{field}: duplicate id `{id}`")]
    DuplicateId { field: String, id: String },
    #[error("{field}: reference to unknown id `{id}`")]
    DanglingReference { field: String, id: String },
    #[error("{field}: passage length must be positive and finite, got {length}")]
    BadLength { field: String, length: f64 },
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    to: usize,
    passage: usize,
}

/// Wire shape of a layout; [`ShipLayout`] adds the adjacency index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutDoc {
    pub compartments: Vec<Compartment>,
    pub passages: Vec<Passage>,
    pub equipment: Vec<Equipment>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(into = "LayoutDoc")]
pub struct ShipLayout {
    compartments: Vec<Compartment>,
    passages: Vec<Passage>,
    equipment: Vec<Equipment>,
    index: HashMap<CompartmentId, usize>,
    adjacency: Vec<Vec<Edge>>,
}

impl PartialEq for ShipLayout {
    fn eq(&self, other: &Self) -> bool {
        self.compartments == other.compartments
            && self.passages == other.passages
            && self.equipment == other.equipment
    }
}

impl From<ShipLayout> for LayoutDoc {
    fn from(layout: ShipLayout) -> Self {
        LayoutDoc {
            compartments: layout.compartments,
            passages: layout.passages,
            equipment: layout.equipment,
        }
    }
}

impl TryFrom<LayoutDoc> for ShipLayout {
    type Error = LayoutError;

    fn try_from(doc: LayoutDoc) -> Result<Self, Self::Error> {
        ShipLayout::new(doc.compartments, doc.passages, doc.equipment)
    }
}

impl ShipLayout {
    /// Builds a layout, checking id uniqueness, references and passage
    /// lengths. Connectivity and escape routes are validator concerns.
    pub fn new(
        compartments: Vec<Compartment>,
        passages: Vec<Passage>,
        equipment: Vec<Equipment>,
    ) -> Result<Self, LayoutError> {
        let mut index = HashMap::with_capacity(compartments.len());
        for (i, c) in compartments.iter().enumerate() {
            if index.insert(c.id.clone(), i).is_some() {
                return Err(LayoutError::DuplicateId {
                    field: format!("layout.compartments[{i}].id"),
                    id: c.id.0.clone(),
                });
            }
        }

        let mut adjacency = vec![Vec::new(); compartments.len()];
        for (i, p) in passages.iter().enumerate() {
            let from = *index.get(&p.from).ok_or_else(|| LayoutError::DanglingReference {
                field: format!("layout.passages[{i}].from"),
                id: p.from.0.clone(),
            })?;
            let to = *index.get(&p.to).ok_or_else(|| LayoutError::DanglingReference {
                field: format!("layout.passages[{i}].to"),
                id: p.to.0.clone(),
            })?;
            if !(p.length_m.is_finite() && p.length_m > 0.0) {
                return Err(LayoutError::BadLength {
                    field: format!("layout.passages[{i}].length_m"),
                    length: p.length_m,
                });
            }
            adjacency[from].push(Edge { to, passage: i });
            adjacency[to].push(Edge { to: from, passage: i });
        }

        let mut seen = HashSet::new();
        for (i, e) in equipment.iter().enumerate() {
            if !seen.insert(&e.id) {
                return Err(LayoutError::DuplicateId {
                    field: format!("layout.equipment[{i}].id"),
                    id: e.id.0.clone(),
                });
            }
            if !index.contains_key(&e.compartment) {
                return Err(LayoutError::DanglingReference {
                    field: format!("layout.equipment[{i}].compartment"),
                    id: e.compartment.0.clone(),
                });
            }
        }

        Ok(Self {
            compartments,
            passages,
            equipment,
            index,
            adjacency,
        })
    }

    pub fn compartments(&self) -> &[Compartment] {
        &self.compartments
    }

    pub fn passages(&self) -> &[Passage] {
        &self.passages
    }

    pub fn equipment(&self) -> &[Equipment] {
        &self.equipment
    }

    pub fn contains(&self, id: &CompartmentId) -> bool {
        self.index.contains_key(id)
    }

    pub fn compartment(&self, id: &CompartmentId) -> Result<&Compartment, LayoutError> {
        self.idx(id).map(|i| &self.compartments[i])
    }

    pub fn equipment_item(&self, id: &EquipmentId) -> Result<&Equipment, LayoutError> {
        self.equipment
            .iter()
            .find(|e| &e.id == id)
            .ok_or_else(|| LayoutError::UnknownEquipment(id.clone()))
    }

    pub fn muster_areas(&self) -> impl Iterator<Item = &Compartment> {
        self.compartments
            .iter()
            .filter(|c| c.kind == CompartmentKind::MusterArea)
    }

    /// Passage joining `a` and `b` directly, shortest first if there are several.
    pub fn passage_between(&self, a: &CompartmentId, b: &CompartmentId) -> Option<&Passage> {
        let ai = self.index.get(a)?;
        let bi = self.index.get(b)?;
        self.adjacency[*ai]
            .iter()
            .filter(|e| e.to == *bi)
            .map(|e| &self.passages[e.passage])
            .min_by(|x, y| x.length_m.total_cmp(&y.length_m))
    }

    pub fn neighbors(&self, id: &CompartmentId) -> Result<BTreeSet<&CompartmentId>, LayoutError> {
        let i = self.idx(id)?;
        Ok(self.adjacency[i]
            .iter()
            .map(|e| &self.compartments[e.to].id)
            .collect())
    }

    fn idx(&self, id: &CompartmentId) -> Result<usize, LayoutError> {
        self.index
            .get(id)
            .copied()
            .ok_or_else(|| LayoutError::UnknownCompartment(id.clone()))
    }

    /// Minimum number of passages between `a` and `b`; `None` when disconnected.
    pub fn graph_distance(
        &self,
        a: &CompartmentId,
        b: &CompartmentId,
    ) -> Result<Option<u32>, LayoutError> {
        let (ai, bi) = (self.idx(a)?, self.idx(b)?);
        Ok(self.hops_from(ai)[bi])
    }

    /// Hop counts from one compartment to every other, indexed like
    /// [`ShipLayout::compartments`].
    pub fn hop_counts(&self, from: &CompartmentId) -> Result<Vec<Option<u32>>, LayoutError> {
        Ok(self.hops_from(self.idx(from)?))
    }

    fn hops_from(&self, start: usize) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.compartments.len()];
        let mut queue = VecDeque::new();
        dist[start] = Some(0);
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for e in &self.adjacency[u] {
                if dist[e.to].is_none() {
                    dist[e.to] = Some(d + 1);
                    queue.push_back(e.to);
                }
            }
        }
        dist
    }

    /// Shortest evacuation path to the nearest muster area using only
    /// passages with escape signage. Equal-length routes are resolved by the
    /// lexicographically smallest compartment-id sequence.
    pub fn shortest_escape_route(
        &self,
        from: &CompartmentId,
    ) -> Result<Vec<CompartmentId>, LayoutError> {
        let start = self.idx(from)?;
        let targets: Vec<usize> = self.muster_indices();
        self.route(start, &targets, true)
            .ok_or_else(|| LayoutError::NoEscapeRoute(from.clone()))
    }

    /// Shortest path over all passages, same tie-breaking as escape routes.
    pub fn shortest_path(
        &self,
        from: &CompartmentId,
        to: &CompartmentId,
    ) -> Result<Vec<CompartmentId>, LayoutError> {
        let (start, goal) = (self.idx(from)?, self.idx(to)?);
        self.route(start, &[goal], false)
            .ok_or_else(|| LayoutError::NoRoute {
                from: from.clone(),
                to: to.clone(),
            })
    }

    /// Shortest distance to any muster area, over signed passages only or
    /// over every passage. Indexed like [`ShipLayout::compartments`].
    pub fn muster_distances(&self, signed_only: bool) -> Vec<Option<f64>> {
        self.distances_to(&self.muster_indices(), signed_only)
    }

    /// Route from `from` to the nearest muster area over every passage,
    /// regardless of signage.
    pub fn shortest_unrestricted_escape(
        &self,
        from: &CompartmentId,
    ) -> Result<Option<Vec<CompartmentId>>, LayoutError> {
        let start = self.idx(from)?;
        Ok(self.route(start, &self.muster_indices(), false))
    }

    fn muster_indices(&self) -> Vec<usize> {
        self.compartments
            .iter()
            .enumerate()
            .filter(|(_, c)| c.kind == CompartmentKind::MusterArea)
            .map(|(i, _)| i)
            .collect()
    }

    /// Multi-source Dijkstra from `targets`; valid for the undirected graph.
    fn distances_to(&self, targets: &[usize], signed_only: bool) -> Vec<Option<f64>> {
        let mut dist: Vec<Option<f64>> = vec![None; self.compartments.len()];
        let mut heap = BinaryHeap::new();
        for &t in targets {
            dist[t] = Some(0.0);
            heap.push(QueueItem { cost: 0.0, node: t });
        }
        while let Some(QueueItem { cost, node }) = heap.pop() {
            if dist[node].is_some_and(|d| cost > d) {
                continue;
            }
            for e in &self.adjacency[node] {
                let p = &self.passages[e.passage];
                if signed_only && !p.has_escape_signage {
                    continue;
                }
                let next = cost + p.length_m;
                if dist[e.to].is_none_or(|d| next < d) {
                    dist[e.to] = Some(next);
                    heap.push(QueueItem { cost: next, node: e.to });
                }
            }
        }
        dist
    }

    fn route(&self, start: usize, targets: &[usize], signed_only: bool) -> Option<Vec<CompartmentId>> {
        let dist = self.distances_to(targets, signed_only);
        dist[start]?;
        // Walk greedily along tight edges, always taking the smallest next id:
        // every tight edge continues some shortest route, so the greedy choice
        // yields the lexicographically smallest one.
        let mut path = vec![self.compartments[start].id.clone()];
        let mut here = start;
        while !targets.contains(&here) {
            let d_here = dist[here]?;
            let next = self.adjacency[here]
                .iter()
                .filter(|e| !signed_only || self.passages[e.passage].has_escape_signage)
                .filter(|e| {
                    dist[e.to].is_some_and(|d| {
                        (d + self.passages[e.passage].length_m - d_here).abs() <= LENGTH_EPSILON
                    })
                })
                .map(|e| e.to)
                .min_by(|a, b| self.compartments[*a].id.cmp(&self.compartments[*b].id))?;
            path.push(self.compartments[next].id.clone());
            here = next;
        }
        Some(path)
    }

    /// Equipment of `kind` located in `compartment`, sorted by id.
    pub fn equipment_in(
        &self,
        compartment: &CompartmentId,
        kind: EquipmentKind,
    ) -> Result<Vec<EquipmentId>, LayoutError> {
        self.idx(compartment)?;
        let mut ids: Vec<EquipmentId> = self
            .equipment
            .iter()
            .filter(|e| &e.compartment == compartment && e.kind == kind)
            .map(|e| e.id.clone())
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// True when every compartment can reach every other.
    pub fn is_connected(&self) -> bool {
        if self.compartments.is_empty() {
            return true;
        }
        self.hops_from(0).iter().all(Option::is_some)
    }

    /// Sum of passage lengths along `path`; `None` if two consecutive
    /// compartments are not adjacent.
    pub fn path_length(&self, path: &[CompartmentId]) -> Option<f64> {
        path.windows(2)
            .map(|w| self.passage_between(&w[0], &w[1]).map(|p| p.length_m))
            .sum()
    }
}

#[derive(Clone, Copy, Debug)]
struct QueueItem {
    cost: f64,
    node: usize,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueItem {}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueueItem {
    // Min-heap on cost, then node index for a deterministic pop order.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

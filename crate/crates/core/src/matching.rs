//! Local search for a perfect matching of the fat/thin hypergraph.
//!
//! On a normalized instance, each player can be satisfied either by one fat
//! resource (`v_r ≥ λ`) or by a *minimal* set of thin resources worth at least
//! `λ`. These are the edges. A perfect matching (every player covered, no
//! resource shared) gives everybody `λ` of the normalized target.
//!
//! A matching is grown one player at a time. To insert an unmatched root
//! player the search keeps a stack of blockers `(x_k, Y_k)`: an edge `x_k` it
//! would like to add, and the matching edges `Y_k` sharing resources with it.
//! Players covered by blocking edges become active and may propose edges of
//! their own, as long as those avoid every resource already covered by the
//! stack. Build pushes such an edge; Contract swaps the first unblocked edge
//! into the matching and truncates the stack above the blocker that activated
//! its player. If neither move is possible the state is stuck, which
//! [`crate::certify`] turns into an infeasibility certificate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use num_traits::Zero;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::instance::{
    Allocation, Bundle, Instance, InstanceError, NormalizedInstance, PlayerId, ResourceId,
};
use crate::rational::Rational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MatchingError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error("player {0} is already matched")]
    AlreadyMatched(PlayerId),
    #[error("edge is not addable: {0}")]
    NotAddable(String),
    #[error("no removable blocker")]
    NoRemovableBlocker,
    #[error("invalid matching: {0}")]
    InvalidMatching(String),
    #[error("search invariant broken: {0}")]
    Invariant(String),
    #[error("extension exceeded {0} steps")]
    StepLimit(usize),
    #[error("matching does not cover every player")]
    NotPerfect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeKind {
    Fat,
    Thin,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub player: PlayerId,
    pub bundle: Bundle,
    pub kind: EdgeKind,
}

impl Edge {
    pub fn fat(player: PlayerId, resource: ResourceId) -> Self {
        Self {
            player,
            bundle: Bundle::from([resource]),
            kind: EdgeKind::Fat,
        }
    }

    pub fn thin(player: PlayerId, bundle: impl IntoIterator<Item = ResourceId>) -> Self {
        Self {
            player,
            bundle: bundle.into_iter().collect(),
            kind: EdgeKind::Thin,
        }
    }

    pub fn shares_resource_with(&self, other: &Bundle) -> bool {
        !self.bundle.is_disjoint(other)
    }

    /// Checks the kind invariant: a fat edge is one desired fat resource, a
    /// thin edge a minimal thin set worth at least `λ`.
    pub fn check(&self, ni: &NormalizedInstance) -> Result<(), String> {
        match self.kind {
            EdgeKind::Fat => {
                let ok = self.bundle.len() == 1
                    && self
                        .bundle
                        .iter()
                        .all(|r| ni.fat_of(self.player).contains(r));
                if ok {
                    Ok(())
                } else {
                    Err(format!("{self} is not a single desired fat resource"))
                }
            }
            EdgeKind::Thin => match is_minimal_thin_edge(ni, self.player, &self.bundle) {
                Ok(true) => Ok(()),
                Ok(false) => Err(format!("{self} is not a minimal thin set")),
                Err(e) => Err(e.to_string()),
            },
        }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ids: Vec<String> = self.bundle.iter().map(|r| r.0.to_string()).collect();
        write!(f, "({}, {{{}}})", self.player.0, ids.join(","))
    }
}

/// True iff `bundle ⊆ R_p^t`, `value(bundle) ≥ λ`, and dropping any one
/// resource falls below `λ`.
pub fn is_minimal_thin_edge(
    ni: &NormalizedInstance,
    player: PlayerId,
    bundle: &Bundle,
) -> Result<bool, MatchingError> {
    ni.base.check_player(player)?;
    for r in bundle {
        ni.base.check_resource(*r)?;
    }
    if bundle.is_empty() || !bundle.is_subset(ni.thin_of(player)) {
        return Ok(false);
    }
    let total = ni.value_of(bundle);
    if total < ni.lambda {
        return Ok(false);
    }
    Ok(bundle.iter().all(|r| &total - ni.value(*r) < ni.lambda))
}

/// Edges keyed by their player; no two edges share a resource.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Matching {
    edges: BTreeMap<PlayerId, Edge>,
}

impl Matching {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges(edges: impl IntoIterator<Item = Edge>) -> Result<Self, MatchingError> {
        let mut m = Self::new();
        for e in edges {
            m.insert(e)?;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn edge_of(&self, player: PlayerId) -> Option<&Edge> {
        self.edges.get(&player)
    }

    pub fn contains(&self, edge: &Edge) -> bool {
        self.edges.get(&edge.player) == Some(edge)
    }

    pub fn resources(&self) -> Bundle {
        self.edges
            .values()
            .flat_map(|e| e.bundle.iter().copied())
            .collect()
    }

    /// Matching edges sharing at least one resource with `bundle`.
    pub fn blocking(&self, bundle: &Bundle) -> BTreeSet<Edge> {
        self.edges
            .values()
            .filter(|e| e.shares_resource_with(bundle))
            .cloned()
            .collect()
    }

    pub fn insert(&mut self, edge: Edge) -> Result<(), MatchingError> {
        if self.edges.contains_key(&edge.player) {
            return Err(MatchingError::InvalidMatching(format!(
                "player {} matched twice",
                edge.player.0
            )));
        }
        if let Some(other) = self
            .edges
            .values()
            .find(|e| e.shares_resource_with(&edge.bundle))
        {
            return Err(MatchingError::InvalidMatching(format!(
                "{edge} overlaps {other}"
            )));
        }
        self.edges.insert(edge.player, edge);
        Ok(())
    }

    pub fn remove(&mut self, player: PlayerId) -> Option<Edge> {
        self.edges.remove(&player)
    }

    pub fn is_perfect(&self, players: usize) -> bool {
        self.edges.len() == players
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Blocker {
    /// The edge we would like to add.
    pub edge: Edge,
    /// Matching edges sharing a resource with `edge`.
    pub blocking: BTreeSet<Edge>,
}

impl Blocker {
    pub fn is_removable(&self) -> bool {
        self.blocking.is_empty()
    }

    /// Resources covered by the edge and its blocking edges.
    pub fn resources(&self) -> Bundle {
        self.edge
            .bundle
            .iter()
            .chain(self.blocking.iter().flat_map(|e| e.bundle.iter()))
            .copied()
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchState {
    pub matching: Matching,
    pub root: PlayerId,
    pub blockers: Vec<Blocker>,
    covered: Bundle,
    active: Vec<PlayerId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ContractOutcome {
    /// The blocker at this 1-based index lost its blocking edge; everything
    /// above it was discarded.
    Continue { truncated_to: usize },
    /// The root got its edge.
    Terminated(Matching),
}

impl SearchState {
    pub fn new(matching: Matching, root: PlayerId) -> Self {
        Self::from_parts(matching, root, Vec::new())
    }

    /// Assembles a state from raw parts, deriving the covered and active sets.
    /// Nothing is validated.
    pub fn from_parts(matching: Matching, root: PlayerId, blockers: Vec<Blocker>) -> Self {
        let covered = covered_by(&blockers);
        let active = active_from(root, &blockers);
        Self {
            matching,
            root,
            blockers,
            covered,
            active,
        }
    }

    /// `resource(B_≤ℓ)`.
    pub fn covered(&self) -> &Bundle {
        &self.covered
    }

    /// Active players in activation order, root first.
    pub fn active(&self) -> &[PlayerId] {
        &self.active
    }

    pub fn is_active(&self, p: PlayerId) -> bool {
        self.active.contains(&p)
    }

    pub fn removable_index(&self) -> Option<usize> {
        self.blockers.iter().position(Blocker::is_removable)
    }

    /// Compares the incrementally maintained sets with a full recomputation.
    pub fn check_bookkeeping(&self) -> Result<(), MatchingError> {
        if self.covered != covered_by(&self.blockers) {
            return Err(MatchingError::Invariant("covered set out of sync".into()));
        }
        if self.active != active_from(self.root, &self.blockers) {
            return Err(MatchingError::Invariant(
                "active players out of sync".into(),
            ));
        }
        Ok(())
    }

    pub fn is_addable(&self, edge: &Edge) -> bool {
        !edge.bundle.is_empty()
            && self.is_active(edge.player)
            && edge.bundle.is_disjoint(&self.covered)
    }

    /// Build: append `(edge, Y)` with `Y` every matching edge sharing a
    /// resource with `edge`. Returns the new blocker's 1-based index.
    pub fn build(&mut self, edge: Edge) -> Result<usize, MatchingError> {
        if edge.bundle.is_empty() {
            return Err(MatchingError::NotAddable(format!("{edge} is empty")));
        }
        if !self.is_active(edge.player) {
            return Err(MatchingError::NotAddable(format!(
                "player {} is not active",
                edge.player.0
            )));
        }
        if !edge.bundle.is_disjoint(&self.covered) {
            return Err(MatchingError::NotAddable(format!(
                "{edge} reuses a covered resource"
            )));
        }
        let blocking = self.matching.blocking(&edge.bundle);
        self.covered.extend(edge.bundle.iter().copied());
        for e in &blocking {
            self.covered.extend(e.bundle.iter().copied());
            self.active.push(e.player);
        }
        self.blockers.push(Blocker { edge, blocking });
        Ok(self.blockers.len())
    }

    /// Contract on the lowest-indexed removable blocker.
    pub fn contract(&mut self) -> Result<ContractOutcome, MatchingError> {
        let k = self
            .removable_index()
            .ok_or(MatchingError::NoRemovableBlocker)?;
        let x = self.blockers[k].edge.clone();
        let q = x.player;
        if q == self.root {
            self.matching.insert(x)?;
            self.blockers.clear();
            self.covered.clear();
            self.active = vec![self.root];
            return Ok(ContractOutcome::Terminated(self.matching.clone()));
        }

        let mut holders = self
            .blockers
            .iter()
            .enumerate()
            .filter(|(_, b)| b.blocking.iter().any(|e| e.player == q))
            .map(|(i, _)| i);
        let j = holders.next().ok_or_else(|| {
            MatchingError::Invariant(format!("player {} has no activating blocker", q.0))
        })?;
        if holders.next().is_some() {
            return Err(MatchingError::Invariant(format!(
                "player {} activated by two blockers",
                q.0
            )));
        }
        if j >= k {
            return Err(MatchingError::Invariant(format!(
                "activating blocker {} does not precede removable blocker {}",
                j + 1,
                k + 1
            )));
        }
        let e = self.blockers[j]
            .blocking
            .iter()
            .find(|e| e.player == q)
            .cloned()
            .expect("holder contains q");
        if self.matching.remove(q).as_ref() != Some(&e) {
            return Err(MatchingError::Invariant(format!(
                "{e} is not in the matching"
            )));
        }
        self.matching.insert(x)?;
        self.blockers[j].blocking.remove(&e);

        // Per-blocker resource sets and activated players are disjoint, so the
        // discarded ones can be subtracted directly.
        let mut dropped_players: BTreeSet<PlayerId> = BTreeSet::from([q]);
        for r in &e.bundle {
            self.covered.remove(r);
        }
        for b in self.blockers.drain(j + 1..) {
            for r in b.resources() {
                self.covered.remove(&r);
            }
            dropped_players.extend(b.blocking.iter().map(|e| e.player));
        }
        // x_j may share resources with e; those stay covered through x_j.
        self.covered
            .extend(self.blockers[j].edge.bundle.iter().copied());
        self.active.retain(|p| !dropped_players.contains(p));
        Ok(ContractOutcome::Continue {
            truncated_to: j + 1,
        })
    }
}

fn covered_by(blockers: &[Blocker]) -> Bundle {
    blockers.iter().flat_map(|b| b.resources()).collect()
}

fn active_from(root: PlayerId, blockers: &[Blocker]) -> Vec<PlayerId> {
    std::iter::once(root)
        .chain(
            blockers
                .iter()
                .flat_map(|b| b.blocking.iter().map(|e| e.player)),
        )
        .collect()
}

/// Extended naturals ordered with `Infinite` above every finite value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SignatureEntry {
    Finite(usize),
    Infinite,
}

/// `(|Y_1|, ..., |Y_ℓ|, ∞)`, compared lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Signature(pub Vec<SignatureEntry>);

impl Signature {
    pub fn of(state: &SearchState) -> Self {
        Self::from_sizes(state.blockers.iter().map(|b| b.blocking.len()))
    }

    pub fn from_sizes(sizes: impl IntoIterator<Item = usize>) -> Self {
        let mut entries: Vec<SignatureEntry> =
            sizes.into_iter().map(SignatureEntry::Finite).collect();
        entries.push(SignatureEntry::Infinite);
        Self(entries)
    }

    /// `Σ |Y_i|`.
    pub fn blocking_total(&self) -> usize {
        self.0
            .iter()
            .map(|e| match e {
                SignatureEntry::Finite(n) => *n,
                SignatureEntry::Infinite => 0,
            })
            .sum()
    }

    /// Number of distinct signatures a single extension can pass through on
    /// `players` players: finite entries are positive except possibly the
    /// last, and sum to at most `players`. That is `2^(players + 1)`.
    pub fn distinct_bound(players: usize) -> usize {
        1usize.checked_shl(players as u32 + 1).unwrap_or(usize::MAX)
    }
}

pub fn signature(state: &SearchState) -> Signature {
    Signature::of(state)
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|e| match e {
                SignatureEntry::Finite(n) => n.to_string(),
                SignatureEntry::Infinite => "∞".to_string(),
            })
            .collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum WireEntry {
    Finite(usize),
    Infinite(String),
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let wire: Vec<WireEntry> = self
            .0
            .iter()
            .map(|e| match e {
                SignatureEntry::Finite(n) => WireEntry::Finite(*n),
                SignatureEntry::Infinite => WireEntry::Infinite("inf".into()),
            })
            .collect();
        wire.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let wire = Vec::<WireEntry>::deserialize(d)?;
        wire.into_iter()
            .map(|w| match w {
                WireEntry::Finite(n) => Ok(SignatureEntry::Finite(n)),
                WireEntry::Infinite(s) if s == "inf" => Ok(SignatureEntry::Infinite),
                WireEntry::Infinite(s) => Err(serde::de::Error::custom(format!("bad entry {s:?}"))),
            })
            .collect::<Result<_, _>>()
            .map(Signature)
    }
}

/// The canonical addable edge, or `None` if no active player has one.
///
/// Active players are scanned in activation order. For each, the
/// lowest-index uncovered fat resource wins; otherwise uncovered thin
/// resources are taken by descending value (then index) until worth `λ`, and
/// the result is trimmed to a minimal set.
pub fn find_addable_edge(ni: &NormalizedInstance, state: &SearchState) -> Option<Edge> {
    state
        .active()
        .iter()
        .find_map(|&q| canonical_edge_for(ni, state.covered(), q))
}

fn canonical_edge_for(ni: &NormalizedInstance, covered: &Bundle, q: PlayerId) -> Option<Edge> {
    if let Some(&r) = ni.fat_of(q).difference(covered).next() {
        return Some(Edge::fat(q, r));
    }
    let mut thin: Vec<ResourceId> = ni.thin_of(q).difference(covered).copied().collect();
    thin.sort_by(|a, b| ni.value(*b).cmp(ni.value(*a)).then(a.cmp(b)));
    greedy_thin(ni, q, thin)
}

/// Accumulates `order` until worth `λ`, then trims in ascending value order.
fn greedy_thin(ni: &NormalizedInstance, q: PlayerId, order: Vec<ResourceId>) -> Option<Edge> {
    let mut chosen = Vec::new();
    let mut total = Rational::zero();
    for r in order {
        if total >= ni.lambda {
            break;
        }
        total += ni.value(r);
        chosen.push(r);
    }
    if total < ni.lambda {
        return None;
    }
    chosen.sort_by(|a, b| ni.value(*a).cmp(ni.value(*b)).then(a.cmp(b)));
    let mut kept = Bundle::new();
    for r in chosen {
        let without = &total - ni.value(r);
        if without >= ni.lambda {
            total = without;
        } else {
            kept.insert(r);
        }
    }
    Some(Edge::thin(q, kept))
}

/// How Build chooses among addable edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EdgePolicy {
    /// [`find_addable_edge`].
    #[default]
    Canonical,
    /// Random active player, random fat resource, or a random thin order
    /// trimmed to minimality; reproducible from the seed.
    Seeded(u64),
}

struct EdgePicker {
    rng: Option<ChaCha8Rng>,
}

impl EdgePicker {
    fn new(policy: EdgePolicy) -> Self {
        Self {
            rng: match policy {
                EdgePolicy::Canonical => None,
                EdgePolicy::Seeded(seed) => Some(ChaCha8Rng::seed_from_u64(seed)),
            },
        }
    }

    fn pick(&mut self, ni: &NormalizedInstance, state: &SearchState) -> Option<Edge> {
        let Some(rng) = self.rng.as_mut() else {
            return find_addable_edge(ni, state);
        };
        let mut players = state.active().to_vec();
        players.shuffle(rng);
        for q in players {
            let fat: Vec<ResourceId> = ni.fat_of(q).difference(state.covered()).copied().collect();
            if let Some(&r) = fat.choose(rng) {
                return Some(Edge::fat(q, r));
            }
            let mut thin: Vec<ResourceId> =
                ni.thin_of(q).difference(state.covered()).copied().collect();
            thin.shuffle(rng);
            if let Some(edge) = greedy_thin(ni, q, thin) {
                return Some(edge);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepKind {
    Build,
    Contract,
    Terminate,
    Stuck,
}

/// One search step. `blocker` is the 1-based index of the new blocker for
/// Build, of the truncation point for Contract, and of the swapped-in
/// blocker for Terminate. `signature` is taken after the step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceEvent {
    pub round: usize,
    pub step: usize,
    pub root: PlayerId,
    pub kind: StepKind,
    pub edge: Option<Edge>,
    pub blocker: Option<usize>,
    pub signature: Signature,
}

/// Named wire form of a [`TraceEvent`], one JSON object per line.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub round: usize,
    pub step: usize,
    pub root: String,
    pub kind: StepKind,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub player: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bundle: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub edge_kind: Option<EdgeKind>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub blocker: Option<usize>,
    pub signature: Signature,
}

impl TraceEvent {
    pub fn to_record(&self, instance: &Instance) -> TraceRecord {
        TraceRecord {
            round: self.round,
            step: self.step,
            root: instance.player_name(self.root).to_string(),
            kind: self.kind,
            player: self
                .edge
                .as_ref()
                .map(|e| instance.player_name(e.player).to_string()),
            bundle: self.edge.as_ref().map(|e| {
                e.bundle
                    .iter()
                    .map(|r| instance.resource_name(*r).to_string())
                    .collect()
            }),
            edge_kind: self.edge.as_ref().map(|e| e.kind),
            blocker: self.blocker,
            signature: self.signature.clone(),
        }
    }
}

/// Receives every step with the state right after it.
pub trait SearchObserver {
    fn on_step(&mut self, ni: &NormalizedInstance, state: &SearchState, event: &TraceEvent);
}

/// Observer that ignores everything.
pub struct Quiet;

impl SearchObserver for Quiet {
    fn on_step(&mut self, _: &NormalizedInstance, _: &SearchState, _: &TraceEvent) {}
}

impl<F> SearchObserver for F
where
    F: FnMut(&NormalizedInstance, &SearchState, &TraceEvent),
{
    fn on_step(&mut self, ni: &NormalizedInstance, state: &SearchState, event: &TraceEvent) {
        self(ni, state, event)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchConfig {
    pub policy: EdgePolicy,
    /// Recompute covered/active after every step and compare.
    pub check_bookkeeping: bool,
    /// Steps allowed per extension; defaults to the signature-count bound.
    pub step_limit: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            policy: EdgePolicy::Canonical,
            check_bookkeeping: cfg!(debug_assertions),
            step_limit: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub builds: usize,
    pub contracts: usize,
    pub rounds: usize,
    /// Most steps taken by any single extension.
    pub longest_round: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Extension {
    Extended(Matching),
    Stuck(SearchState),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PerfectOutcome {
    Perfect(Matching),
    Stuck(SearchState),
}

/// Drives Build and Contract over one normalized instance.
pub struct LocalSearch<'a, O: SearchObserver = Quiet> {
    ni: &'a NormalizedInstance,
    config: SearchConfig,
    picker: EdgePicker,
    observer: O,
    stats: SearchStats,
}

impl<'a> LocalSearch<'a, Quiet> {
    pub fn new(ni: &'a NormalizedInstance) -> Self {
        Self::with_observer(ni, SearchConfig::default(), Quiet)
    }
}

impl<'a, O: SearchObserver> LocalSearch<'a, O> {
    pub fn with_observer(ni: &'a NormalizedInstance, config: SearchConfig, observer: O) -> Self {
        Self {
            ni,
            config,
            picker: EdgePicker::new(config.policy),
            observer,
            stats: SearchStats::default(),
        }
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn into_observer(self) -> O {
        self.observer
    }

    /// Inserts `root` into `matching`, keeping every matched player matched.
    /// Contracts whenever a removable blocker exists, builds otherwise.
    pub fn extend(
        &mut self,
        matching: Matching,
        root: PlayerId,
    ) -> Result<Extension, MatchingError> {
        self.ni.base.check_player(root)?;
        if matching.edge_of(root).is_some() {
            return Err(MatchingError::AlreadyMatched(root));
        }
        let round = self.stats.rounds;
        self.stats.rounds += 1;
        let limit = self
            .config
            .step_limit
            .unwrap_or_else(|| Signature::distinct_bound(self.ni.base.player_count()));
        let mut state = SearchState::new(matching, root);
        let mut step = 0usize;
        loop {
            step += 1;
            if step > limit {
                return Err(MatchingError::StepLimit(limit));
            }
            self.stats.longest_round = self.stats.longest_round.max(step);
            let mut event = TraceEvent {
                round,
                step,
                root,
                kind: StepKind::Build,
                edge: None,
                blocker: None,
                signature: Signature::from_sizes([]),
            };
            if let Some(k) = state.removable_index() {
                let x = state.blockers[k].edge.clone();
                self.stats.contracts += 1;
                match state.contract()? {
                    ContractOutcome::Terminated(m) => {
                        event.kind = StepKind::Terminate;
                        event.edge = Some(x);
                        event.blocker = Some(k + 1);
                        event.signature = Signature::of(&state);
                        self.observer.on_step(self.ni, &state, &event);
                        return Ok(Extension::Extended(m));
                    }
                    ContractOutcome::Continue { truncated_to } => {
                        event.kind = StepKind::Contract;
                        event.edge = Some(x);
                        event.blocker = Some(truncated_to);
                    }
                }
            } else if let Some(edge) = self.picker.pick(self.ni, &state) {
                self.stats.builds += 1;
                let index = state.build(edge.clone())?;
                event.edge = Some(edge);
                event.blocker = Some(index);
            } else {
                event.kind = StepKind::Stuck;
                event.signature = Signature::of(&state);
                self.observer.on_step(self.ni, &state, &event);
                return Ok(Extension::Stuck(state));
            }
            if self.config.check_bookkeeping {
                state.check_bookkeeping()?;
            }
            event.signature = Signature::of(&state);
            self.observer.on_step(self.ni, &state, &event);
        }
    }

    /// Extends unmatched players in index order until all are matched, or
    /// returns the first stuck state.
    pub fn perfect_matching(&mut self) -> Result<PerfectOutcome, MatchingError> {
        let mut matching = Matching::new();
        for p in self.ni.base.players() {
            if matching.edge_of(p).is_some() {
                continue;
            }
            match self.extend(matching, p)? {
                Extension::Extended(m) => matching = m,
                Extension::Stuck(state) => return Ok(PerfectOutcome::Stuck(state)),
            }
        }
        Ok(PerfectOutcome::Perfect(matching))
    }
}

pub fn extend_matching(
    ni: &NormalizedInstance,
    matching: Matching,
    root: PlayerId,
) -> Result<Extension, MatchingError> {
    LocalSearch::new(ni).extend(matching, root)
}

pub fn find_perfect_matching(ni: &NormalizedInstance) -> Result<PerfectOutcome, MatchingError> {
    LocalSearch::new(ni).perfect_matching()
}

/// Turns a perfect matching into an allocation of every resource. Leftovers
/// go to the lowest-index player desiring them, else to the first player.
pub fn complete_allocation(
    instance: &Instance,
    matching: &Matching,
) -> Result<Allocation, MatchingError> {
    if !matching.is_perfect(instance.player_count()) {
        return Err(MatchingError::NotPerfect);
    }
    let mut bundles: Vec<Bundle> = instance
        .players()
        .map(|p| {
            matching
                .edge_of(p)
                .map(|e| e.bundle.clone())
                .unwrap_or_default()
        })
        .collect();
    let used = matching.resources();
    for r in instance.resources().filter(|r| !used.contains(r)) {
        let owner = instance
            .players()
            .find(|p| instance.desires_resource(*p, r))
            .unwrap_or(PlayerId(0));
        bundles[owner.0].insert(r);
    }
    Ok(Allocation { bundles })
}

//! Ground truth by brute force, and audits of the search state.
//!
//! Nothing here shares code with the solvers it checks beyond the exact LP
//! engine: OPT is found by exhaustive assignment, `T*` by writing out every
//! configuration at every subset-sum breakpoint, and search states are
//! re-checked from their raw parts.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instance::{
    Allocation, Bundle, Instance, InstanceError, NormalizedInstance, PlayerId, ResourceId,
};
use crate::matching::{Edge, SearchState, Signature};
use crate::rational::Rational;
use crate::ratlp::{solve_lp, LinearProgram, LpError, LpOutcome, Relation, Sense};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error("{what} is {needed}, budget is {budget}")]
    BudgetExceeded {
        what: &'static str,
        needed: u128,
        budget: u128,
    },
    #[error("allocation is not a partition: {0}")]
    NotAPartition(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub detail: String,
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    fn from_violations(violations: Vec<Violation>) -> Self {
        Self {
            passed: violations.is_empty(),
            violations,
        }
    }

    pub fn violates(&self, invariant: &str) -> bool {
        self.violations.iter().any(|v| v.invariant == invariant)
    }
}

#[derive(Default)]
struct Audit(Vec<Violation>);

impl Audit {
    fn flag(&mut self, invariant: &str, detail: String, indices: Vec<usize>) {
        self.0.push(Violation {
            invariant: invariant.to_string(),
            detail,
            indices,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OptBudget {
    pub players: usize,
    pub resources: usize,
}

impl Default for OptBudget {
    fn default() -> Self {
        Self {
            players: 6,
            resources: 12,
        }
    }
}

/// Exact integral optimum: the best min player value over all assignments.
///
/// Each resource goes to one player desiring it; resources nobody desires
/// (or worth nothing) are discarded since they cannot raise anyone's value.
pub fn brute_force_opt(instance: &Instance, budget: OptBudget) -> Result<Rational, OracleError> {
    let (m, n) = (instance.player_count(), instance.resource_count());
    if m > budget.players {
        return Err(OracleError::BudgetExceeded {
            what: "player count",
            needed: m as u128,
            budget: budget.players as u128,
        });
    }
    if n > budget.resources {
        return Err(OracleError::BudgetExceeded {
            what: "resource count",
            needed: n as u128,
            budget: budget.resources as u128,
        });
    }
    let useful: Vec<(ResourceId, Vec<PlayerId>)> = instance
        .resources()
        .filter(|r| !instance.value(*r).is_zero())
        .map(|r| {
            (
                r,
                instance
                    .players()
                    .filter(|p| instance.desires_resource(*p, r))
                    .collect::<Vec<_>>(),
            )
        })
        .filter(|(_, ps)| !ps.is_empty())
        .collect();
    // remaining[i][p]: what player p could still gain from useful[i..].
    let mut remaining = vec![vec![Rational::zero(); m]; useful.len() + 1];
    for i in (0..useful.len()).rev() {
        remaining[i] = remaining[i + 1].clone();
        for p in &useful[i].1 {
            remaining[i][p.0] += instance.value(useful[i].0);
        }
    }
    let mut search = Assign {
        instance,
        useful: &useful,
        remaining: &remaining,
        values: vec![Rational::zero(); m],
        best: None,
    };
    search.run(0);
    Ok(search.best.unwrap_or_default())
}

struct Assign<'a> {
    instance: &'a Instance,
    useful: &'a [(ResourceId, Vec<PlayerId>)],
    remaining: &'a [Vec<Rational>],
    values: Vec<Rational>,
    best: Option<Rational>,
}

impl Assign<'_> {
    fn run(&mut self, i: usize) {
        let bound = self
            .values
            .iter()
            .zip(&self.remaining[i])
            .map(|(v, rest)| v + rest)
            .min()
            .unwrap_or_default();
        if self.best.as_ref().is_some_and(|b| &bound <= b) {
            return;
        }
        if i == self.useful.len() {
            self.best = Some(bound);
            return;
        }
        let (r, players) = &self.useful[i];
        let v = self.instance.value(*r);
        for p in players {
            self.values[p.0] += v;
            self.run(i + 1);
            self.values[p.0] -= v;
        }
    }
}

pub const DEFAULT_CONFIGURATION_BUDGET: u128 = 1 << 12;

/// `T*` from the full configuration LP at every breakpoint.
///
/// Feasibility of CLP(T) only changes where `T` crosses a subset sum of some
/// `R_p`, so the largest feasible `T` is the largest feasible subset sum.
/// Breakpoints are bisected; 0 is returned if none is feasible.
pub fn exact_t_star_enumerated(instance: &Instance, budget: u128) -> Result<Rational, OracleError> {
    let needed: u128 = instance
        .players()
        .map(|p| {
            1u128
                .checked_shl(instance.desires(p).len() as u32)
                .unwrap_or(u128::MAX)
        })
        .fold(0u128, u128::saturating_add);
    if needed > budget {
        return Err(OracleError::BudgetExceeded {
            what: "configuration count",
            needed,
            budget,
        });
    }
    let subsets: Vec<Vec<(Bundle, Rational)>> = instance
        .players()
        .map(|p| all_subsets(instance, instance.desires(p)))
        .collect();
    let breakpoints: BTreeSet<Rational> = subsets
        .iter()
        .flatten()
        .map(|(_, v)| v.clone())
        .filter(|v| v > &Rational::zero())
        .collect();
    // Feasibility is monotone in t: fewer columns survive a larger threshold.
    let breakpoints: Vec<Rational> = breakpoints.into_iter().collect();
    let (mut lo, mut hi) = (0, breakpoints.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        if configuration_lp_feasible(instance, &subsets, &breakpoints[mid])? {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    Ok(if lo == 0 {
        Rational::zero()
    } else {
        breakpoints[lo - 1].clone()
    })
}

fn all_subsets(instance: &Instance, desired: &Bundle) -> Vec<(Bundle, Rational)> {
    let items: Vec<ResourceId> = desired.iter().copied().collect();
    (0u64..1 << items.len())
        .map(|mask| {
            let bundle: Bundle = items
                .iter()
                .enumerate()
                .filter(|(i, _)| mask >> i & 1 == 1)
                .map(|(_, r)| *r)
                .collect();
            let value = bundle
                .iter()
                .fold(Rational::zero(), |acc, r| acc + instance.value(*r));
            (bundle, value)
        })
        .collect()
}

/// Writes out the primal: one variable per (player, configuration), a `≥ 1`
/// row per player, a `≤ 1` row per resource.
fn configuration_lp_feasible(
    instance: &Instance,
    subsets: &[Vec<(Bundle, Rational)>],
    t: &Rational,
) -> Result<bool, OracleError> {
    let columns: Vec<(PlayerId, &Bundle)> = instance
        .players()
        .flat_map(|p| {
            subsets[p.0]
                .iter()
                .filter(move |(_, v)| v >= t)
                .map(move |(b, _)| (p, b))
        })
        .collect();
    let mut lp = LinearProgram::new(Sense::Minimize, vec![Rational::zero(); columns.len()]);
    for p in instance.players() {
        let row = columns
            .iter()
            .map(|(q, _)| {
                if *q == p {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect();
        lp.add_constraint(row, Relation::Ge, Rational::one());
    }
    for r in instance.resources() {
        let row = columns
            .iter()
            .map(|(_, b)| {
                if b.contains(&r) {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect();
        lp.add_constraint(row, Relation::Le, Rational::one());
    }
    Ok(match solve_lp(&lp)? {
        LpOutcome::Optimal(_) => true,
        LpOutcome::Infeasible => false,
        LpOutcome::Unbounded => unreachable!("zero objective cannot be unbounded"),
    })
}

/// Re-derives every structural property of a search state from scratch.
///
/// Invariant names: `matching`, `root`, `edge-kind`, `disjoint-x` (the x_i
/// share no resource), `exact-blocking` (Y_i is exactly the matching edges
/// meeting x_i), `disjoint-y` (the Y_i are disjoint subsets of the matching),
/// `addability` (x_i was addable against B_<i), `activation` (each active
/// player has exactly one activating blocker), `bookkeeping`.
pub fn check_state_invariants(ni: &NormalizedInstance, state: &SearchState) -> AuditReport {
    let mut audit = Audit::default();
    let edges: Vec<&Edge> = state.matching.edges().collect();
    for (a, e) in edges.iter().enumerate() {
        for f in &edges[a + 1..] {
            if e.player == f.player || e.shares_resource_with(&f.bundle) {
                audit.flag(
                    "matching",
                    format!("{e} and {f} overlap"),
                    vec![e.player.0, f.player.0],
                );
            }
        }
        if let Err(detail) = e.check(ni) {
            audit.flag("edge-kind", detail, vec![e.player.0]);
        }
    }
    if state.matching.edge_of(state.root).is_some() {
        audit.flag("root", "root is already matched".into(), vec![state.root.0]);
    }

    let blockers = &state.blockers;
    for (i, b) in blockers.iter().enumerate() {
        if let Err(detail) = b.edge.check(ni) {
            audit.flag("edge-kind", detail, vec![i + 1]);
        }
        for (j, c) in blockers.iter().enumerate().skip(i + 1) {
            if b.edge.shares_resource_with(&c.edge.bundle) {
                audit.flag(
                    "disjoint-x",
                    format!("x_{} and x_{} share a resource", i + 1, j + 1),
                    vec![i + 1, j + 1],
                );
            }
            if let Some(e) = b.blocking.intersection(&c.blocking).next() {
                audit.flag(
                    "disjoint-y",
                    format!("{e} is in both Y_{} and Y_{}", i + 1, j + 1),
                    vec![i + 1, j + 1],
                );
            }
        }
        for e in &b.blocking {
            if !state.matching.contains(e) {
                audit.flag(
                    "disjoint-y",
                    format!("{e} in Y_{} is not matched", i + 1),
                    vec![i + 1],
                );
            }
        }
        let meeting: BTreeSet<Edge> = edges
            .iter()
            .filter(|e| e.shares_resource_with(&b.edge.bundle))
            .map(|e| (*e).clone())
            .collect();
        if meeting != b.blocking {
            audit.flag(
                "exact-blocking",
                format!(
                    "Y_{} differs from the matching edges meeting {}",
                    i + 1,
                    b.edge
                ),
                vec![i + 1],
            );
        }

        let q = b.edge.player;
        let earlier_players = blockers[..i]
            .iter()
            .flat_map(|c| c.blocking.iter().map(|e| e.player));
        if q != state.root && !earlier_players.into_iter().any(|p| p == q) {
            audit.flag(
                "addability",
                format!("player {} of x_{} was not active", q.0, i + 1),
                vec![i + 1],
            );
        }
        let earlier: Bundle = blockers[..i].iter().flat_map(|c| c.resources()).collect();
        if !b.edge.bundle.is_disjoint(&earlier) {
            audit.flag(
                "addability",
                format!("x_{} reuses a resource covered by earlier blockers", i + 1),
                vec![i + 1],
            );
        }
    }

    let mut activators: BTreeMap<PlayerId, Vec<usize>> = BTreeMap::new();
    for (i, b) in blockers.iter().enumerate() {
        for e in &b.blocking {
            activators.entry(e.player).or_default().push(i + 1);
        }
    }
    for (p, by) in &activators {
        if by.len() > 1 || *p == state.root {
            audit.flag(
                "activation",
                format!("player {} activated by blockers {by:?}", p.0),
                by.clone(),
            );
        }
    }

    let covered: Bundle = blockers.iter().flat_map(|b| b.resources()).collect();
    if &covered != state.covered() {
        audit.flag(
            "bookkeeping",
            "covered set differs from recomputation".into(),
            vec![],
        );
    }
    let active: BTreeSet<PlayerId> = std::iter::once(state.root)
        .chain(activators.keys().copied())
        .collect();
    let stored: BTreeSet<PlayerId> = state.active().iter().copied().collect();
    if active != stored || stored.len() != state.active().len() {
        audit.flag(
            "bookkeeping",
            "active set differs from recomputation".into(),
            vec![],
        );
    }
    AuditReport::from_violations(audit.0)
}

/// Checks one extension's signatures: each strictly below the previous, and
/// `Σ|Y_i| ≤ m` throughout.
pub fn monitor_signatures(trace: &[Signature], players: usize) -> AuditReport {
    let mut audit = Audit::default();
    for (i, pair) in trace.windows(2).enumerate() {
        if pair[1] >= pair[0] {
            audit.flag(
                "strict-decrease",
                format!("{} does not precede {}", pair[1], pair[0]),
                vec![i, i + 1],
            );
        }
    }
    for (i, s) in trace.iter().enumerate() {
        if s.blocking_total() > players {
            audit.flag(
                "blocking-total",
                format!(
                    "{s} blocks {} edges with {players} players",
                    s.blocking_total()
                ),
                vec![i],
            );
        }
    }
    AuditReport::from_violations(audit.0)
}

/// The allocation's value: `min_p value_p(bundle_p)`.
pub fn verify_allocation(
    instance: &Instance,
    allocation: &Allocation,
) -> Result<Rational, OracleError> {
    if allocation.bundles.len() != instance.player_count() {
        return Err(OracleError::NotAPartition(format!(
            "{} bundles for {} players",
            allocation.bundles.len(),
            instance.player_count()
        )));
    }
    let mut owner: BTreeMap<ResourceId, PlayerId> = BTreeMap::new();
    for (p, bundle) in allocation.bundles.iter().enumerate() {
        for r in bundle {
            instance.check_resource(*r)?;
            if let Some(first) = owner.insert(*r, PlayerId(p)) {
                return Err(OracleError::NotAPartition(format!(
                    "{} given to {} and {}",
                    instance.resource_name(*r),
                    instance.player_name(first),
                    instance.player_name(PlayerId(p))
                )));
            }
        }
    }
    if let Some(r) = instance.resources().find(|r| !owner.contains_key(r)) {
        return Err(OracleError::NotAPartition(format!(
            "{} is not allocated",
            instance.resource_name(r)
        )));
    }
    let values = instance.players().map(|p| {
        allocation.bundles[p.0]
            .iter()
            .filter(|r| instance.desires_resource(p, **r))
            .fold(Rational::zero(), |acc, r| acc + instance.value(*r))
    });
    Ok(values.min().unwrap_or_default())
}

/// `T*/OPT` rendered for tables, or `None` when OPT is zero.
pub fn gap_ratio(t_star: &Rational, opt: &Rational) -> Option<Rational> {
    (!opt.is_zero()).then(|| t_star / opt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clp::{compute_t_star, TStarMode};
    use crate::instance::normalize;
    use crate::matching::{Blocker, Matching};
    use crate::rational::{int, rat};

    fn inst(values: &[Rational], desires: &[&[usize]]) -> Instance {
        Instance::new(
            (0..desires.len()).map(|p| format!("p{}", p + 1)),
            values
                .iter()
                .enumerate()
                .map(|(i, v)| (format!("r{}", i + 1), v.clone())),
            desires.iter().enumerate().map(|(p, rs)| {
                (
                    format!("p{}", p + 1),
                    rs.iter().map(|r| format!("r{}", r + 1)).collect(),
                )
            }),
        )
        .unwrap()
    }

    #[test]
    fn opt_examples() {
        let b = OptBudget::default();
        assert_eq!(
            brute_force_opt(&inst(&[int(1), int(1)], &[&[0, 1], &[0, 1]]), b).unwrap(),
            int(1)
        );
        assert_eq!(
            brute_force_opt(&inst(&[int(1)], &[&[0], &[0]]), b).unwrap(),
            int(0)
        );
        let tenths = inst(&vec![rat(1, 10); 3], &[&[0, 1, 2]]);
        assert_eq!(brute_force_opt(&tenths, b).unwrap(), rat(3, 10));
        let big = inst(&vec![int(1); 13], &[&[0]]);
        assert!(matches!(
            brute_force_opt(&big, b),
            Err(OracleError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn opt_balances_uneven_values() {
        // {3,2,2,1} between two players: best split is 4/4.
        let i = inst(
            &[int(3), int(2), int(2), int(1)],
            &[&[0, 1, 2, 3], &[0, 1, 2, 3]],
        );
        assert_eq!(brute_force_opt(&i, OptBudget::default()).unwrap(), int(4));
    }

    #[test]
    fn t_star_examples() {
        let b = DEFAULT_CONFIGURATION_BUDGET;
        assert_eq!(
            exact_t_star_enumerated(&inst(&[int(1), int(1)], &[&[0, 1], &[0, 1]]), b).unwrap(),
            int(1)
        );
        assert_eq!(
            exact_t_star_enumerated(&inst(&[int(1)], &[&[0], &[0]]), b).unwrap(),
            int(0)
        );
        let wide = inst(&vec![int(1); 13], &[&(0..13).collect::<Vec<_>>()]);
        assert!(matches!(
            exact_t_star_enumerated(&wide, b),
            Err(OracleError::BudgetExceeded { needed: 8192, .. })
        ));
    }

    #[test]
    fn t_star_can_be_fractional_in_the_lp_sense() {
        // Three players over three unit resources, each desiring two of them
        // in a cycle: CLP(2) would need 2 per player, impossible; CLP(1) is fine.
        let i = inst(&[int(1), int(1), int(1)], &[&[0, 1], &[1, 2], &[2, 0]]);
        let t = exact_t_star_enumerated(&i, DEFAULT_CONFIGURATION_BUDGET).unwrap();
        assert_eq!(t, int(1));
        assert_eq!(compute_t_star(&i, &TStarMode::default()).unwrap().value, t);
    }

    #[test]
    fn allocation_values() {
        let i = inst(&[int(1), int(1)], &[&[0, 1], &[0, 1]]);
        let good = Allocation {
            bundles: vec![Bundle::from([ResourceId(0)]), Bundle::from([ResourceId(1)])],
        };
        assert_eq!(verify_allocation(&i, &good).unwrap(), int(1));

        let j = inst(&[int(1), int(1)], &[&[0], &[0]]);
        let undesired = Allocation {
            bundles: vec![Bundle::from([ResourceId(0)]), Bundle::from([ResourceId(1)])],
        };
        assert_eq!(verify_allocation(&j, &undesired).unwrap(), int(0));

        let twice = Allocation {
            bundles: vec![
                Bundle::from([ResourceId(0), ResourceId(1)]),
                Bundle::from([ResourceId(1)]),
            ],
        };
        assert!(matches!(
            verify_allocation(&i, &twice),
            Err(OracleError::NotAPartition(_))
        ));
        let missing = Allocation {
            bundles: vec![Bundle::from([ResourceId(0)]), Bundle::new()],
        };
        assert!(matches!(
            verify_allocation(&i, &missing),
            Err(OracleError::NotAPartition(_))
        ));
    }

    #[test]
    fn signature_monitor() {
        let s = |xs: &[usize]| Signature::from_sizes(xs.iter().copied());
        assert!(monitor_signatures(&[s(&[]), s(&[1]), s(&[0])], 2).passed);
        let flat = monitor_signatures(&[s(&[1]), s(&[1])], 2);
        assert!(flat.violates("strict-decrease"));
        let crowded = monitor_signatures(&[s(&[2, 1])], 2);
        assert!(crowded.violates("blocking-total"));
        assert!(!crowded.violates("strict-decrease"));
    }

    /// p1 holds t1, p2 holds t2; root p3. Values 1 so every edge is fat.
    fn planted() -> (NormalizedInstance, Matching) {
        let i = inst(&[int(1), int(1), int(1)], &[&[0, 2], &[1, 2], &[0, 1, 2]]);
        let ni = normalize(&i, &int(1)).unwrap();
        let m = Matching::from_edges([
            Edge::fat(PlayerId(0), ResourceId(0)),
            Edge::fat(PlayerId(1), ResourceId(1)),
        ])
        .unwrap();
        (ni, m)
    }

    #[test]
    fn healthy_state_passes() {
        let (ni, m) = planted();
        let mut state = SearchState::new(m, PlayerId(2));
        state.build(Edge::fat(PlayerId(2), ResourceId(0))).unwrap();
        let report = check_state_invariants(&ni, &state);
        assert!(report.passed, "{:?}", report.violations);
    }

    #[test]
    fn detects_shared_x() {
        let (ni, m) = planted();
        let e1 = m.edge_of(PlayerId(0)).unwrap().clone();
        let state = SearchState::from_parts(
            m,
            PlayerId(2),
            vec![
                Blocker {
                    edge: Edge::fat(PlayerId(2), ResourceId(0)),
                    blocking: BTreeSet::from([e1.clone()]),
                },
                Blocker {
                    edge: Edge::fat(PlayerId(0), ResourceId(0)),
                    blocking: BTreeSet::from([e1]),
                },
            ],
        );
        let report = check_state_invariants(&ni, &state);
        assert!(report.violates("disjoint-x"));
        assert!(report.violates("disjoint-y"));
    }

    #[test]
    fn detects_duplicated_blocking_edge() {
        let (ni, m) = planted();
        let e1 = m.edge_of(PlayerId(0)).unwrap().clone();
        let state = SearchState::from_parts(
            m,
            PlayerId(2),
            vec![
                Blocker {
                    edge: Edge::fat(PlayerId(2), ResourceId(0)),
                    blocking: BTreeSet::from([e1.clone()]),
                },
                Blocker {
                    edge: Edge::fat(PlayerId(0), ResourceId(2)),
                    blocking: BTreeSet::from([e1]),
                },
            ],
        );
        let report = check_state_invariants(&ni, &state);
        assert!(report.violates("disjoint-y"));
        assert!(report.violates("activation"));
        assert!(!report.violates("disjoint-x"));
    }

    #[test]
    fn detects_missing_blocking_edge() {
        let (ni, m) = planted();
        let state = SearchState::from_parts(
            m,
            PlayerId(2),
            vec![Blocker {
                edge: Edge::fat(PlayerId(2), ResourceId(0)),
                blocking: BTreeSet::new(),
            }],
        );
        let report = check_state_invariants(&ni, &state);
        assert!(report.violates("exact-blocking"));
        assert!(!report.violates("disjoint-x"));
    }
}

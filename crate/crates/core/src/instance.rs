//! Restricted max-min instances: players, valued resources and desire sets.
//!
//! A resource `r` is worth `v_r` to every player that desires it and nothing to
//! anyone else. Players and resources are addressed by dense indices in input
//! order; that order is also the tie-breaking order for every otherwise
//! arbitrary choice made downstream.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::{parse_rational, rat, sum, ParseRationalError, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PlayerId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResourceId(pub usize);

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p#{}", self.0)
    }
}

impl fmt::Display for ResourceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r#{}", self.0)
    }
}

pub type Bundle = BTreeSet<ResourceId>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum InstanceError {
    #[error("instance has no players")]
    NoPlayers,
    #[error("duplicate player id {0:?}")]
    DuplicatePlayer(String),
    #[error("duplicate resource id {0:?}")]
    DuplicateResource(String),
    #[error("unknown resource {0:?}")]
    UnknownResource(String),
    #[error("unknown player {0:?}")]
    UnknownPlayer(String),
    #[error("resource {resource:?} has negative value {value}")]
    NegativeValue { resource: String, value: Rational },
    #[error("normalization target must be positive, got {0}")]
    NonPositiveTarget(Rational),
    #[error("player index {0} out of range")]
    PlayerOutOfRange(usize),
    #[error("resource index {0} out of range")]
    ResourceOutOfRange(usize),
    #[error(transparent)]
    BadValue(#[from] ParseRationalError),
}

/// Wire form of an instance, as read from and written to JSON.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawInstance {
    pub players: Vec<String>,
    pub resources: Vec<RawResource>,
    #[serde(default)]
    pub desires: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResource {
    pub id: String,
    pub value: String,
}

/// A validated instance. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    players: Vec<String>,
    resources: Vec<String>,
    values: Vec<Rational>,
    desires: Vec<Bundle>,
}

impl Instance {
    /// Builds an instance from names, values and per-player desire lists.
    pub fn new<P, R, D>(players: P, resources: R, desires: D) -> Result<Self, InstanceError>
    where
        P: IntoIterator,
        P::Item: Into<String>,
        R: IntoIterator<Item = (String, Rational)>,
        D: IntoIterator<Item = (String, Vec<String>)>,
    {
        let players: Vec<String> = players.into_iter().map(Into::into).collect();
        if players.is_empty() {
            return Err(InstanceError::NoPlayers);
        }
        let mut seen = HashSet::new();
        for p in &players {
            if !seen.insert(p.as_str()) {
                return Err(InstanceError::DuplicatePlayer(p.clone()));
            }
        }

        let mut names = Vec::new();
        let mut values = Vec::new();
        let mut resource_index = BTreeMap::new();
        for (id, value) in resources {
            if value.is_negative() {
                return Err(InstanceError::NegativeValue {
                    resource: id,
                    value,
                });
            }
            if resource_index.insert(id.clone(), names.len()).is_some() {
                return Err(InstanceError::DuplicateResource(id));
            }
            names.push(id);
            values.push(value);
        }

        let player_index: BTreeMap<&str, usize> = players
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let mut desire_sets = vec![Bundle::new(); players.len()];
        for (player, wanted) in desires {
            let &pi = player_index
                .get(player.as_str())
                .ok_or_else(|| InstanceError::UnknownPlayer(player.clone()))?;
            for r in wanted {
                let &ri = resource_index
                    .get(&r)
                    .ok_or_else(|| InstanceError::UnknownResource(r.clone()))?;
                desire_sets[pi].insert(ResourceId(ri));
            }
        }

        Ok(Self {
            players,
            resources: names,
            values,
            desires: desire_sets,
        })
    }

    pub fn player_count(&self) -> usize {
        self.players.len()
    }

    pub fn resource_count(&self) -> usize {
        self.resources.len()
    }

    pub fn players(&self) -> impl ExactSizeIterator<Item = PlayerId> {
        (0..self.players.len()).map(PlayerId)
    }

    pub fn resources(&self) -> impl ExactSizeIterator<Item = ResourceId> {
        (0..self.resources.len()).map(ResourceId)
    }

    pub fn player_name(&self, p: PlayerId) -> &str {
        &self.players[p.0]
    }

    pub fn resource_name(&self, r: ResourceId) -> &str {
        &self.resources[r.0]
    }

    pub fn player_by_name(&self, name: &str) -> Option<PlayerId> {
        self.players.iter().position(|p| p == name).map(PlayerId)
    }

    pub fn resource_by_name(&self, name: &str) -> Option<ResourceId> {
        self.resources
            .iter()
            .position(|r| r == name)
            .map(ResourceId)
    }

    pub fn value(&self, r: ResourceId) -> &Rational {
        &self.values[r.0]
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// The desire set `R_p`.
    pub fn desires(&self, p: PlayerId) -> &Bundle {
        &self.desires[p.0]
    }

    pub fn desires_resource(&self, p: PlayerId, r: ResourceId) -> bool {
        self.desires[p.0].contains(&r)
    }

    /// `value(R_p)`, the most any single player can ever receive.
    pub fn desired_value(&self, p: PlayerId) -> Rational {
        sum(self.desires[p.0].iter().map(|r| &self.values[r.0]))
    }

    pub fn check_player(&self, p: PlayerId) -> Result<(), InstanceError> {
        if p.0 < self.players.len() {
            Ok(())
        } else {
            Err(InstanceError::PlayerOutOfRange(p.0))
        }
    }

    pub fn check_resource(&self, r: ResourceId) -> Result<(), InstanceError> {
        if r.0 < self.resources.len() {
            Ok(())
        } else {
            Err(InstanceError::ResourceOutOfRange(r.0))
        }
    }

    /// Same players and desires with every value multiplied by `factor`.
    pub fn scaled(&self, factor: &Rational) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    pub fn to_raw(&self) -> RawInstance {
        RawInstance {
            players: self.players.clone(),
            resources: self
                .resources
                .iter()
                .zip(&self.values)
                .map(|(id, v)| RawResource {
                    id: id.clone(),
                    value: crate::rational::format_rational(v),
                })
                .collect(),
            desires: self
                .players
                .iter()
                .zip(&self.desires)
                .map(|(p, d)| {
                    (
                        p.clone(),
                        d.iter().map(|r| self.resources[r.0].clone()).collect(),
                    )
                })
                .collect(),
        }
    }
}

/// Validates a wire-form instance. Ids keep their input order.
pub fn validate_instance(raw: &RawInstance) -> Result<Instance, InstanceError> {
    let resources = raw
        .resources
        .iter()
        .map(|r| Ok((r.id.clone(), parse_rational(&r.value)?)))
        .collect::<Result<Vec<_>, InstanceError>>()?;
    Instance::new(
        raw.players.iter().cloned(),
        resources,
        raw.desires.iter().map(|(p, rs)| (p.clone(), rs.clone())),
    )
}

/// `Σ_{r ∈ bundle} v_pr`: resources outside `R_p` contribute nothing.
pub fn bundle_value<'a, I>(
    instance: &Instance,
    player: PlayerId,
    bundle: I,
) -> Result<Rational, InstanceError>
where
    I: IntoIterator<Item = &'a ResourceId>,
{
    instance.check_player(player)?;
    let mut total = Rational::zero();
    for &r in bundle {
        instance.check_resource(r)?;
        if instance.desires_resource(player, r) {
            total += instance.value(r);
        }
    }
    Ok(total)
}

/// A bundle per player, indexed by player.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub bundles: Vec<Bundle>,
}

impl Allocation {
    pub fn bundle(&self, p: PlayerId) -> &Bundle {
        &self.bundles[p.0]
    }

    /// Wire form: player name → resource names.
    pub fn to_names(&self, instance: &Instance) -> BTreeMap<String, Vec<String>> {
        instance
            .players()
            .zip(&self.bundles)
            .map(|(p, b)| {
                (
                    instance.player_name(p).to_string(),
                    b.iter()
                        .map(|r| instance.resource_name(*r).to_string())
                        .collect(),
                )
            })
            .collect()
    }

    /// Resolves names against `instance`. Players missing from the map get an
    /// empty bundle; partition checks are left to the caller.
    pub fn from_names(
        instance: &Instance,
        names: &BTreeMap<String, Vec<String>>,
    ) -> Result<Self, InstanceError> {
        let mut bundles = vec![Bundle::new(); instance.player_count()];
        for (player, resources) in names {
            let p = instance
                .player_by_name(player)
                .ok_or_else(|| InstanceError::UnknownPlayer(player.clone()))?;
            for r in resources {
                let r = instance
                    .resource_by_name(r)
                    .ok_or_else(|| InstanceError::UnknownResource(r.clone()))?;
                bundles[p.0].insert(r);
            }
        }
        Ok(Self { bundles })
    }
}

/// The fat/thin threshold, `6/23` of the normalized target.
pub fn lambda() -> Rational {
    rat(6, 23)
}

/// An instance rescaled so that the target becomes 1, with every desired
/// resource of positive value classified as fat (`v_r ≥ λ`) or thin.
#[derive(Debug, Clone)]
pub struct NormalizedInstance {
    pub base: Instance,
    pub target: Rational,
    pub lambda: Rational,
    pub fat: Vec<Bundle>,
    pub thin: Vec<Bundle>,
}

impl NormalizedInstance {
    pub fn is_fat(&self, r: ResourceId) -> bool {
        self.base.value(r) >= &self.lambda
    }

    pub fn is_thin(&self, r: ResourceId) -> bool {
        let v = self.base.value(r);
        v.is_positive() && v < &self.lambda
    }

    pub fn value(&self, r: ResourceId) -> &Rational {
        self.base.value(r)
    }

    pub fn fat_of(&self, p: PlayerId) -> &Bundle {
        &self.fat[p.0]
    }

    pub fn thin_of(&self, p: PlayerId) -> &Bundle {
        &self.thin[p.0]
    }

    /// Plain sum of normalized values.
    pub fn value_of<'a, I: IntoIterator<Item = &'a ResourceId>>(&self, bundle: I) -> Rational {
        sum(bundle.into_iter().map(|r| self.base.value(*r)))
    }
}

/// Divides every value by `target` and classifies resources against `λ = 6/23`.
pub fn normalize(
    instance: &Instance,
    target: &Rational,
) -> Result<NormalizedInstance, InstanceError> {
    if !target.is_positive() {
        return Err(InstanceError::NonPositiveTarget(target.clone()));
    }
    let base = instance.scaled(&target.recip());
    let lambda = lambda();
    let mut fat = Vec::with_capacity(base.player_count());
    let mut thin = Vec::with_capacity(base.player_count());
    for p in base.players() {
        let (f, t): (Vec<ResourceId>, Vec<ResourceId>) = base
            .desires(p)
            .iter()
            .filter(|r| base.value(**r).is_positive())
            .partition(|r| base.value(**r) >= &lambda);
        fat.push(f.into_iter().collect());
        thin.push(t.into_iter().collect());
    }
    Ok(NormalizedInstance {
        base,
        target: target.clone(),
        lambda,
        fat,
        thin,
    })
}

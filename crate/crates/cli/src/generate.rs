//! Seeded random instances.

use std::fmt;
use std::str::FromStr;

use maxmin_core::rational::rat;
use maxmin_core::{Instance, Rational};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    /// Values `k/20` for uniform `k ∈ 1..=20`; each desire with probability 1/2.
    Uniform,
    /// About a quarter of the resources worth 1, the rest worth `1/k` for
    /// `k ∈ 2..=6`; desires as in `Uniform`.
    FatThinMix,
    /// Players in groups of two or three sharing a pool of resources, plus a
    /// few stray desires; values as in `Uniform`.
    ClusteredDesire,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [Self::Uniform, Self::FatThinMix, Self::ClusteredDesire];
}

impl FromStr for GeneratorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "fat-thin-mix" => Ok(Self::FatThinMix),
            "clustered-desire" => Ok(Self::ClusteredDesire),
            other => Err(format!(
                "unknown generator {other:?} (expected uniform, fat-thin-mix or clustered-desire)"
            )),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::FatThinMix => "fat-thin-mix",
            Self::ClusteredDesire => "clustered-desire",
        })
    }
}

/// Deterministic in `(kind, players, resources, seed)`.
pub fn generate_instance(
    kind: GeneratorKind,
    players: usize,
    resources: usize,
    seed: u64,
) -> Result<Instance, CliError> {
    if players == 0 || resources == 0 {
        return Err(CliError::InvalidArgument(format!(
            "need at least one player and one resource, got {players} and {resources}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (values, desires) = match kind {
        GeneratorKind::Uniform => {
            let values = twentieths(&mut rng, resources);
            (values, coin_desires(&mut rng, players, resources))
        }
        GeneratorKind::FatThinMix => {
            let fat = resources.div_ceil(4);
            let mut values: Vec<Rational> = (0..resources)
                .map(|i| {
                    if i < fat {
                        rat(1, 1)
                    } else {
                        rat(1, rng.gen_range(2..=6))
                    }
                })
                .collect();
            values.shuffle(&mut rng);
            (values, coin_desires(&mut rng, players, resources))
        }
        GeneratorKind::ClusteredDesire => {
            let values = twentieths(&mut rng, resources);
            (values, clustered_desires(&mut rng, players, resources))
        }
    };
    let instance = Instance::new(
        (0..players).map(|p| format!("p{}", p + 1)),
        values
            .into_iter()
            .enumerate()
            .map(|(r, v)| (format!("r{}", r + 1), v)),
        desires.into_iter().enumerate().map(|(p, rs)| {
            (
                format!("p{}", p + 1),
                rs.into_iter()
                    .map(|r| format!("r{}", r + 1))
                    .collect::<Vec<_>>(),
            )
        }),
    )?;
    Ok(instance)
}

fn twentieths(rng: &mut ChaCha8Rng, n: usize) -> Vec<Rational> {
    (0..n).map(|_| rat(rng.gen_range(1..=20), 20)).collect()
}

/// Each resource independently with probability 1/2, redrawn until non-empty.
fn coin_desires(rng: &mut ChaCha8Rng, players: usize, resources: usize) -> Vec<Vec<usize>> {
    (0..players)
        .map(|_| loop {
            let set: Vec<usize> = (0..resources).filter(|_| rng.gen_bool(0.5)).collect();
            if !set.is_empty() {
                break set;
            }
        })
        .collect()
}

fn clustered_desires(rng: &mut ChaCha8Rng, players: usize, resources: usize) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..players).collect();
    order.shuffle(rng);
    let groups = players.div_ceil(rng.gen_range(2..=3)).max(1);
    let mut group_of = vec![0; players];
    for (i, p) in order.into_iter().enumerate() {
        group_of[p] = i % groups;
    }
    let mut pool_of: Vec<usize> = (0..resources).map(|r| r % groups).collect();
    pool_of.shuffle(rng);
    (0..players)
        .map(|p| {
            let mut set: Vec<usize> = (0..resources)
                .filter(|&r| pool_of[r] == group_of[p] || rng.gen_bool(0.1))
                .collect();
            if set.is_empty() {
                set.push(rng.gen_range(0..resources));
            }
            set
        })
        .collect()
}

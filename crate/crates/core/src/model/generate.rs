use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use super::{ConditionalTable, ConfoundedDistribution, JointDistribution};
use crate::error::{Error, Result};

/// A point drawn uniformly from the probability simplex of dimension `len − 1`.
pub(crate) fn uniform_simplex<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..len).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        if total > 0.0 {
            return draws.into_iter().map(|v| v / total).collect();
        }
    }
}

/// Joint table drawn uniformly from the (4k − 1)-simplex, a pure function of `seed`.
pub fn random_instance(k: usize, seed: u64) -> Result<JointDistribution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_instance_with(&mut rng, k)
}

pub(crate) fn random_instance_with<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Result<JointDistribution> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let flat = uniform_simplex(rng, 4 * k);
    let mut chunks = flat.chunks(k).map(<[f64]>::to_vec);
    let cells = [(); 4].map(|_| chunks.next().expect("4k cells"));
    JointDistribution::new(cells)
}

/// Conditional table with every row drawn uniformly from the (k − 1)-simplex.
/// For k = 2 this is P(Z=1|y,t) uniform on [0, 1]^4.
pub fn random_conditional<R: Rng + ?Sized>(rng: &mut R, k: usize) -> Result<ConditionalTable> {
    if k < 2 {
        return Err(Error::invalid(format!("k must be at least 2, got {k}")));
    }
    let rows = [(); 4].map(|_| uniform_simplex(rng, k));
    ConditionalTable::new(rows)
}

/// Fixed binary instances on which each policy is at its worst.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdversarialCase {
    NspWorst,
    UspWorst,
    OwspWorst,
}

impl AdversarialCase {
    pub const ALL: [AdversarialCase; 3] = [
        AdversarialCase::NspWorst,
        AdversarialCase::UspWorst,
        AdversarialCase::OwspWorst,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AdversarialCase::NspWorst => "nsp_worst",
            AdversarialCase::UspWorst => "usp_worst",
            AdversarialCase::OwspWorst => "owsp_worst",
        }
    }
}

impl std::str::FromStr for AdversarialCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nsp" | "nsp_worst" | "nsp-worst" => Ok(AdversarialCase::NspWorst),
            "usp" | "usp_worst" | "usp-worst" => Ok(AdversarialCase::UspWorst),
            "owsp" | "owsp_worst" | "owsp-worst" => Ok(AdversarialCase::OwspWorst),
            other => Err(Error::invalid(format!("unknown adversarial case `{other}`"))),
        }
    }
}

/// The `(a, q)` pair for an adversarial case; `q` holds P(Z=1|y,t).
pub fn adversarial_instance(which: AdversarialCase) -> (ConfoundedDistribution, ConditionalTable) {
    let (a, q) = match which {
        AdversarialCase::NspWorst => ([0.9, 0.02, 0.01, 0.07], [0.9, 0.7, 0.01, 0.3]),
        AdversarialCase::UspWorst => ([0.79, 0.01, 0.02, 0.18], [0.5, 0.01, 0.05, 0.5]),
        AdversarialCase::OwspWorst => ([0.5, 0.01, 0.19, 0.3], [0.05, 0.5, 0.055, 0.4]),
    };
    (
        ConfoundedDistribution::new(a).expect("fixed instance is normalized"),
        ConditionalTable::binary(q).expect("fixed instance is normalized"),
    )
}

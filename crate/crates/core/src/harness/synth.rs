use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::gallery::{Embedding, EmbeddingSet};

/// Clustered embeddings on the unit sphere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub num_identities: usize,
    pub embeddings_per_identity: usize,
    pub dimension: usize,
    /// Scale of the per-embedding Gaussian noise.
    pub within_spread: f64,
    /// Norm of each identity's cluster centre.
    pub between_spread: f64,
    pub rng_seed: u64,
}

impl SynthSpec {
    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::InvalidSpec(m.to_string()));
        if self.num_identities == 0 || self.embeddings_per_identity == 0 {
            return bad("identity and embedding counts must be positive");
        }
        if self.dimension < 2 {
            return bad("dimension must be at least 2");
        }
        if !(self.within_spread > 0.0 && self.within_spread.is_finite()) {
            return bad("within_spread must be positive");
        }
        if !(self.between_spread > 0.0 && self.between_spread.is_finite()) {
            return bad("between_spread must be positive");
        }
        Ok(())
    }
}

fn normal_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| StandardNormal.sample(rng)).collect()
}

fn normalized(mut v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}

/// Each identity gets a uniformly random direction scaled by `between_spread`;
/// each of its embeddings is `normalize(centre + within_spread · z)` with
/// `z ~ N(0, I)`. Identities are labelled `id0000, id0001, …`.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<EmbeddingSet, HarnessError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let d = spec.dimension;
    let mut embeddings = Vec::with_capacity(spec.num_identities * spec.embeddings_per_identity);
    for i in 0..spec.num_identities {
        let centre: Vec<f64> = normalized(normal_vec(&mut rng, d))
            .into_iter()
            .map(|x| x * spec.between_spread)
            .collect();
        let label = format!("id{i:04}");
        for k in 0..spec.embeddings_per_identity {
            let noise = normal_vec(&mut rng, d);
            let v = centre
                .iter()
                .zip(&noise)
                .map(|(c, z)| c + spec.within_spread * z)
                .collect();
            embeddings.push(Embedding::new(
                &label,
                format!("{label}-{k:03}"),
                normalized(v),
            ));
        }
    }
    Ok(EmbeddingSet {
        dimension: d,
        embeddings,
    })
}

//! Pass probabilities of coherent superpositions from coherent-state overlaps
//! alone, with no Fock-space truncation. Serves as an independent check on
//! the truncated numerics.

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::fock::coherent_overlap_exact;
use crate::protocols::{PassRule, SettingRecipe};
use crate::scalar::{Real, C};
use crate::states::CoherentSuperposition;

fn vacuum_overlap<T: Real>(a: C<T>) -> C<T> {
    // <a|0> = e^{-|a|²/2}
    C::new((-a.norm_sqr() / T::lit(2.0)).exp(), T::zero())
}

/// `tr(Ω ρ)` for the setting described by `recipe` (with ideal detectors)
/// and the normalized version of `sup`.
///
/// Click tests use `Π_{k∈M}(1 − |0><0|)` for the failing event; parity tests
/// use `(1 ± Π_k π_k)/2` with `π|a> = |−a>`.
pub fn pass_probability_exact<T: Real>(sup: &CoherentSuperposition<T>, recipe: &SettingRecipe<T>) -> Result<T> {
    if recipe.displacements.len() != sup.num_modes() || recipe.detectors.len() != sup.num_modes() {
        return Err(Error::ShapeMismatch("recipe and superposition disagree on the number of modes".into()));
    }
    let moved = sup.displaced(&recipe.displacements)?;
    let norm = moved.norm_sqr_exact();
    let measured: Vec<bool> = recipe.detectors.iter().map(|d| d.is_some()).collect();
    let mut acc = C::<T>::zero();
    for (ci, ai) in &moved.terms {
        for (cj, aj) in &moved.terms {
            let mut prod = C::one();
            for k in 0..ai.len() {
                let (a, b) = (ai[k], aj[k]);
                let factor = match recipe.rule {
                    PassRule::NotAllClicked if measured[k] => {
                        coherent_overlap_exact(a, b) - vacuum_overlap(a).conj() * vacuum_overlap(b)
                    }
                    PassRule::EvenParity | PassRule::OddParity if measured[k] => coherent_overlap_exact(a, -b),
                    _ => coherent_overlap_exact(a, b),
                };
                prod *= factor;
            }
            acc += ci.conj() * cj * prod;
        }
    }
    let value = acc.re / norm;
    Ok(match recipe.rule {
        PassRule::NotAllClicked => T::one() - value,
        PassRule::EvenParity => (T::one() + value) / T::lit(2.0),
        PassRule::OddParity => (T::one() - value) / T::lit(2.0),
    })
}

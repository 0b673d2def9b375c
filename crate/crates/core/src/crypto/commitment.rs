//! Pedersen commitments `Comm(x, r) = g^x h^r`.
//!
//! The commitment is perfectly hiding: for every `x'` there is exactly one `r'`
//! with `Comm(x', r') = Comm(x, r)`. With the trapdoor `α = log_g h` that opening
//! can be computed; [`equivocate`] does so and is only usable under parameters
//! that carry a trapdoor.

use serde::{Deserialize, Serialize};

use super::group::{Element, GroupParams, Scalar};

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CommitmentError {
    #[error("parameters carry no trapdoor; equivocation is unavailable")]
    NoTrapdoor,
    #[error("the supplied opening does not open the commitment")]
    OpeningMismatch,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Commitment(Element);

impl Commitment {
    pub fn from_element(e: Element) -> Self {
        Commitment(e)
    }

    pub fn element(&self) -> &Element {
        &self.0
    }
}

pub fn commit(params: &GroupParams, x: &Scalar, r: &Scalar) -> Commitment {
    Commitment(params.mul(&params.exp(params.g(), x), &params.exp(params.h(), r)))
}

/// Commitment to a string, through [`GroupParams::identity_scalar`].
pub fn commit_identity(params: &GroupParams, vid: &str, r: &Scalar) -> Commitment {
    commit(params, &params.identity_scalar(vid), r)
}

pub fn verify_commitment(params: &GroupParams, rho: &Commitment, x: &Scalar, r: &Scalar) -> bool {
    commit(params, x, r) == *rho
}

/// Opens `rho` to `x_target`: returns `t* = t + (x - x_target) / α mod q`.
pub fn equivocate(
    params: &GroupParams,
    rho: &Commitment,
    x_orig: &Scalar,
    t_orig: &Scalar,
    x_target: &Scalar,
) -> Result<Scalar, CommitmentError> {
    let alpha = params.trapdoor().ok_or(CommitmentError::NoTrapdoor)?;
    if !verify_commitment(params, rho, x_orig, t_orig) {
        return Err(CommitmentError::OpeningMismatch);
    }
    let alpha_inv = params.scalar_inv(alpha).expect("trapdoor is nonzero since h != 1");
    let shift = params.scalar_mul(&params.scalar_sub(x_orig, x_target), &alpha_inv);
    Ok(params.scalar_add(t_orig, &shift))
}

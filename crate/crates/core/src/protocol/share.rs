//! Two-party additive secret sharing over `Z_{2^l}`.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Client,
    Server,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Party::Client => "client",
            Party::Server => "server",
        })
    }
}

/// One party's additive share of a tensor.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Share {
    pub party: Party,
    pub tensor: Tensor,
}

impl Share {
    pub fn new(party: Party, tensor: Tensor) -> Self {
        Share { party, tensor }
    }

    pub fn shape(&self) -> &[usize] {
        self.tensor.shape()
    }
}

/// Splits `x` into a uniform client share and `x - client` for the server.
pub fn share<R: Rng + ?Sized>(x: &Tensor, rng: &mut R) -> (Share, Share) {
    let client = Tensor::random(x.shape(), x.bits(), rng);
    let server = x.sub(&client).expect("same shape and width");
    (Share::new(Party::Client, client), Share::new(Party::Server, server))
}

/// `a + b mod 2^l`; the two shares must belong to different parties.
pub fn reconstruct(a: &Share, b: &Share) -> Result<Tensor> {
    if a.party == b.party {
        return Err(Error::PartyMismatch(format!("both shares belong to the {}", a.party)));
    }
    a.tensor.add(&b.tensor)
}

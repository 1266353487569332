//! The two-party convolution session.
//!
//! The client holds `<X>^C` and a secret key; the server holds `<X>^S` and the
//! weights. The client encrypts its packed share and sends it; the server adds
//! its own packed share, multiplies by the packed weights, masks every output
//! coefficient with a fresh `R` and returns the masked LWE ciphertexts. The
//! server keeps `R mod 2^l` as `<Y>^S` and the client decrypts `<Y>^C = Y - R`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::rlwe::{
    check_budget, expand_a, extract_remask_batch, hom_add, hom_add_plain, hom_mul_plain, keygen, Backend, Noise,
    RlweCiphertext, SecretKey, NOISE_ETA,
};
use super::share::{Party, Share};
use super::wire::{duplex, Endpoint, InputMessage, OutputMessage, MSG_INPUT, MSG_OUTPUT};
use crate::error::{Error, Result};
use crate::packing::{ConvPlan, WeightLift};
use crate::params::HeParams;
use crate::ring::RingPoly;
use crate::tensor::{ConvDims, Tensor};
use crate::tiling::{falcon_untiled, plan_for, solve_tiling, Framework, TileChoice};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionSeeds {
    pub session: u64,
    pub client: u64,
    pub server: u64,
}

impl SessionSeeds {
    pub fn derive(session: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(session);
        SessionSeeds {
            session,
            client: rng.next_u64(),
            server: rng.next_u64(),
        }
    }
}

/// What went over the wire and what the server computed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolTranscript {
    pub backend: Backend,
    pub framework: Framework,
    pub dims: ConvDims,
    pub params: HeParams,
    pub tile: Option<(usize, usize)>,
    pub client_to_server_bytes: usize,
    pub server_to_client_bytes: usize,
    pub input_messages: usize,
    pub output_messages: usize,
    /// Packed ciphertext bodies, excluding frame headers and seeds.
    pub input_ciphertext_bytes: usize,
    pub output_ciphertext_bytes: usize,
    pub input_ciphertexts: usize,
    pub output_ciphertexts: usize,
    pub lwe_ciphertexts: usize,
    pub hom_add_plain: usize,
    pub hom_mul_plain: usize,
    pub hom_add: usize,
    pub remasks: usize,
    /// Largest tracked noise bound before masking, in bits.
    pub max_noise_bits: f64,
    pub seeds: SessionSeeds,
}

impl ProtocolTranscript {
    pub fn total_bytes(&self) -> usize {
        self.client_to_server_bytes + self.server_to_client_bytes
    }

    /// Bytes spent on framing, seeds and message headers.
    pub fn framing_bytes(&self) -> usize {
        self.total_bytes() - self.input_ciphertext_bytes - self.output_ciphertext_bytes
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

fn check_share(share: &Share, party: Party, plan: &ConvPlan, params: &HeParams) -> Result<()> {
    if share.party != party {
        return Err(Error::PartyMismatch(format!(
            "expected a {party} share, got a {} share",
            share.party
        )));
    }
    if share.shape() != plan.dims.input_shape().as_slice() {
        return Err(Error::Dimension(format!(
            "share shape {:?}, convolution expects {:?}",
            share.shape(),
            plan.dims.input_shape()
        )));
    }
    if share.tensor.bits() != params.plain_bits {
        return Err(Error::Params(format!(
            "share is mod 2^{}, session uses 2^{}",
            share.tensor.bits(),
            params.plain_bits
        )));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ClientState {
    Ready,
    AwaitingOutputs,
    Done,
}

/// Client state machine: `send_inputs`, then `receive_outputs`.
pub struct Client {
    plan: ConvPlan,
    params: HeParams,
    sk: SecretKey,
    share: Share,
    rng: ChaCha20Rng,
    state: ClientState,
    pub ciphertext_bytes_sent: usize,
    pub ciphertext_bytes_received: usize,
}

impl Client {
    pub fn new(plan: &ConvPlan, params: &HeParams, backend: Backend, share: Share, seed: u64) -> Result<Self> {
        check_share(&share, Party::Client, plan, params)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let sk = keygen(params, backend, &mut rng)?;
        Ok(Client {
            plan: plan.clone(),
            params: *params,
            sk,
            share,
            rng,
            state: ClientState::Ready,
            ciphertext_bytes_sent: 0,
            ciphertext_bytes_received: 0,
        })
    }

    pub fn secret_key(&self) -> &SecretKey {
        &self.sk
    }

    pub fn send_inputs(&mut self, ep: &mut Endpoint) -> Result<()> {
        if self.state != ClientState::Ready {
            return Err(Error::Protocol("client inputs already sent".into()));
        }
        let polys = self.plan.pack_inputs(&self.share.tensor, self.params.q_bits)?;
        for m in &polys {
            let ct = self.sk.encrypt(m, &mut self.rng)?;
            let msg = InputMessage {
                seed: ct.seed.expect("fresh ciphertext"),
                b: ct.b.into_coeffs(),
            };
            let payload = msg.encode(&self.params);
            self.ciphertext_bytes_sent += payload.len() - 32;
            ep.send(MSG_INPUT, &payload)?;
        }
        self.state = ClientState::AwaitingOutputs;
        Ok(())
    }

    pub fn receive_outputs(&mut self, ep: &mut Endpoint) -> Result<Share> {
        if self.state != ClientState::AwaitingOutputs {
            return Err(Error::Protocol("client is not waiting for outputs".into()));
        }
        let mut y = Tensor::zeros(&self.plan.dims.output_shape(), self.params.plain_bits);
        let mut seen = vec![false; self.plan.outputs.len()];
        for _ in 0..self.plan.outputs.len() {
            let payload = ep.recv_kind(MSG_OUTPUT)?;
            self.ciphertext_bytes_received += payload.len() - 8;
            let msg = OutputMessage::decode(&payload, &self.params)?;
            let id = msg.id as usize;
            let target = self.plan.outputs.get(id).ok_or(Error::IndexOutOfRange {
                index: id,
                limit: seen.len(),
            })?;
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::Protocol(format!("output {id} received twice")));
            }
            if msg.b.len() != target.extract.len() {
                return Err(Error::Protocol(format!(
                    "output {id} carries {} values, layout has {}",
                    msg.b.len(),
                    target.extract.len()
                )));
            }
            let a = RingPoly::from_coeffs(self.params.n, self.params.q_bits, msg.a)?;
            let idxs: Vec<usize> = target.extract.iter().map(|&(c, _)| c).collect();
            let vals = self.sk.decrypt_batch(&a, &idxs, &msg.b)?;
            let data = y.data_mut();
            for (&(_, dst), v) in target.extract.iter().zip(vals) {
                data[dst] = v;
            }
        }
        self.state = ClientState::Done;
        Ok(Share::new(Party::Client, y))
    }
}

/// Homomorphic work done by the server.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ServerStats {
    pub hom_add_plain: usize,
    pub hom_mul_plain: usize,
    pub hom_add: usize,
    pub remasks: usize,
    pub max_noise_bits: f64,
    pub ciphertext_bytes_sent: usize,
}

/// Server state machine: one `respond` call per session.
pub struct Server {
    plan: ConvPlan,
    params: HeParams,
    backend: Backend,
    share: Share,
    weights: Vec<RingPoly>,
    rng: ChaCha20Rng,
    done: bool,
    pub stats: ServerStats,
}

impl Server {
    pub fn new(
        plan: &ConvPlan,
        params: &HeParams,
        backend: Backend,
        share: Share,
        w: &Tensor,
        seed: u64,
    ) -> Result<Self> {
        check_share(&share, Party::Server, plan, params)?;
        let weights = plan.pack_weights(w, params.q_bits, WeightLift::Centered)?;
        Ok(Server {
            plan: plan.clone(),
            params: *params,
            backend,
            share,
            weights,
            rng: ChaCha20Rng::seed_from_u64(seed),
            done: false,
            stats: ServerStats::default(),
        })
    }

    fn fresh_noise(&self) -> Noise {
        match self.backend {
            Backend::Ideal => Noise::Bounded(0),
            Backend::Rlwe => Noise::Bounded(NOISE_ETA as u64),
        }
    }

    pub fn respond(&mut self, ep: &mut Endpoint) -> Result<Share> {
        if self.done {
            return Err(Error::Protocol("server already responded".into()));
        }
        let mine = self.plan.pack_inputs(&self.share.tensor, self.params.q_bits)?;
        let mut cts = Vec::with_capacity(mine.len());
        for own in &mine {
            let msg = InputMessage::decode(&ep.recv_kind(MSG_INPUT)?, &self.params)?;
            let ct = RlweCiphertext {
                b: RingPoly::from_coeffs(self.params.n, self.params.q_bits, msg.b)?,
                a: expand_a(&self.params, self.backend, &msg.seed),
                seed: Some(msg.seed),
                noise: self.fresh_noise(),
            };
            cts.push(hom_add_plain(&ct, own)?);
            self.stats.hom_add_plain += 1;
        }

        let qm = self.params.q_mask();
        let pm = self.params.plain_mask();
        let mut y = Tensor::zeros(&self.plan.dims.output_shape(), self.params.plain_bits);
        for (id, target) in self.plan.outputs.iter().enumerate() {
            let mut acc: Option<RlweCiphertext> = None;
            for &(i, w) in &target.terms {
                let prod = hom_mul_plain(&cts[i], &self.weights[w])?;
                self.stats.hom_mul_plain += 1;
                acc = Some(match acc {
                    None => prod,
                    Some(prev) => {
                        self.stats.hom_add += 1;
                        hom_add(&prev, &prod)?
                    }
                });
            }
            let acc = acc.ok_or_else(|| Error::Protocol(format!("output {id} has no terms")))?;
            if self.backend == Backend::Rlwe {
                check_budget(acc.noise, &self.params)?;
            }
            self.stats.max_noise_bits = self.stats.max_noise_bits.max(acc.noise.bits());

            let idxs: Vec<usize> = target.extract.iter().map(|&(c, _)| c).collect();
            let masks: Vec<u64> = idxs.iter().map(|_| self.rng.gen::<u64>() & qm).collect();
            let b = extract_remask_batch(&acc, &idxs, &masks)?;
            self.stats.remasks += masks.len();
            let data = y.data_mut();
            for (&(_, dst), r) in target.extract.iter().zip(&masks) {
                data[dst] = r & pm;
            }
            let msg = OutputMessage {
                id: id as u32,
                a: acc.a.into_coeffs(),
                b,
            };
            let payload = msg.encode(&self.params);
            self.stats.ciphertext_bytes_sent += payload.len() - 8;
            ep.send(MSG_OUTPUT, &payload)?;
        }
        self.done = true;
        Ok(Share::new(Party::Server, y))
    }
}

/// How a session is set up.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub params: HeParams,
    pub backend: Backend,
    pub framework: Framework,
    /// Overrides the solver for the dense frameworks.
    pub tile: Option<TileChoice>,
    pub seed: u64,
}

impl SessionConfig {
    pub fn new(params: HeParams, backend: Backend, seed: u64) -> Self {
        SessionConfig {
            params,
            backend,
            framework: Framework::FalconTiled,
            tile: None,
            seed,
        }
    }

    fn resolved_tile(&self, dims: &ConvDims) -> Result<Option<TileChoice>> {
        Ok(match (self.framework, self.tile) {
            (Framework::Falcon | Framework::FalconTiled, Some(t)) => Some(t),
            (Framework::Falcon, None) => Some(falcon_untiled(dims, &self.params)?),
            (Framework::FalconTiled, None) => Some(solve_tiling(dims, &self.params)?),
            _ => None,
        })
    }
}

/// Runs a full session in one thread and returns both output shares.
pub fn run_session(
    config: &SessionConfig,
    client_share: Share,
    server_share: Share,
    w: &Tensor,
    dims: &ConvDims,
) -> Result<(Share, Share, ProtocolTranscript)> {
    config.params.validate()?;
    let tile = config.resolved_tile(dims)?;
    let plan = plan_for(config.framework, dims, &config.params, tile)?;
    let seeds = SessionSeeds::derive(config.seed);
    let mut client = Client::new(&plan, &config.params, config.backend, client_share, seeds.client)?;
    let mut server = Server::new(&plan, &config.params, config.backend, server_share, w, seeds.server)?;
    let (mut c_ep, mut s_ep) = duplex();

    client.send_inputs(&mut c_ep)?;
    let y_server = server.respond(&mut s_ep)?;
    let y_client = client.receive_outputs(&mut c_ep)?;

    let st = server.stats;
    let transcript = ProtocolTranscript {
        backend: config.backend,
        framework: config.framework,
        dims: *dims,
        params: config.params,
        tile: tile.map(|t| (t.c_x, t.c_w)),
        client_to_server_bytes: c_ep.bytes_sent,
        server_to_client_bytes: s_ep.bytes_sent,
        input_messages: c_ep.frames_sent,
        output_messages: s_ep.frames_sent,
        input_ciphertext_bytes: client.ciphertext_bytes_sent,
        output_ciphertext_bytes: st.ciphertext_bytes_sent,
        input_ciphertexts: plan.input_poly_count(),
        output_ciphertexts: plan.output_poly_count(),
        lwe_ciphertexts: st.remasks,
        hom_add_plain: st.hom_add_plain,
        hom_mul_plain: st.hom_mul_plain,
        hom_add: st.hom_add,
        remasks: st.remasks,
        max_noise_bits: st.max_noise_bits,
        seeds,
    };
    Ok((y_client, y_server, transcript))
}

/// Secure depthwise (or group) convolution with the tiled dense packing.
pub fn secure_dwconv(
    client_share: &Share,
    server_share: &Share,
    w: &Tensor,
    dims: &ConvDims,
    params: &HeParams,
    backend: Backend,
    seed: u64,
) -> Result<(Share, Share, ProtocolTranscript)> {
    let config = SessionConfig::new(*params, backend, seed);
    run_session(&config, client_share.clone(), server_share.clone(), w, dims)
}

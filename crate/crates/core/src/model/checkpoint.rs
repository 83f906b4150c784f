//! Binary checkpoint format.
//!
//! ```text
//! bytes 0..4     magic "AEL1"
//! 8 × u64 LE     num_users, num_items, K_large, K_medium, K_small,
//!                flags (bit 0: gate present), num_experts, k
//! f64 LE arrays  per level Large, Medium, Small:
//!                  encoder weight (prev × K), encoder bias (K),
//!                  user embedding (U × K), decoder weight (K × prev),
//!                  decoder bias (prev)
//!                then, if the gate is present: w_gate (D × E), w_noise (D × E)
//! ```
//!
//! `num_experts` and `k` are zero when no gate is stored. Trailing bytes are
//! rejected.

use std::fs;
use std::path::Path;

use super::{AelModel, HiddenDims};
use crate::error::{Error, Result};
use crate::gating::GatingNetwork;

pub const MAGIC: &[u8; 4] = b"AEL1";
const FLAG_GATE: u64 = 1;
const HEADER_WORDS: usize = 8;

pub fn encode(model: &AelModel, gating: Option<&GatingNetwork>) -> Result<Vec<u8>> {
    if let Some(g) = gating {
        if g.num_items() != model.num_items() {
            return Err(Error::dim("gate width", model.num_items(), g.num_items()));
        }
    }
    let dims = model.hidden_dims().0;
    let header = [
        model.num_users() as u64,
        model.num_items() as u64,
        dims[0] as u64,
        dims[1] as u64,
        dims[2] as u64,
        if gating.is_some() { FLAG_GATE } else { 0 },
        gating.map_or(0, |g| g.num_experts() as u64),
        gating.map_or(0, |g| g.k() as u64),
    ];
    let scalars = model.num_parameters() + gating.map_or(0, GatingNetwork::num_parameters);
    let mut out = Vec::with_capacity(4 + 8 * (HEADER_WORDS + scalars));
    out.extend_from_slice(MAGIC);
    for word in header {
        out.extend_from_slice(&word.to_le_bytes());
    }
    let gate_tensors = gating.map(GatingNetwork::tensors).unwrap_or_default();
    for tensor in model.tensors().into_iter().chain(gate_tensors) {
        for v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<(AelModel, Option<GatingNetwork>)> {
    if bytes.len() < 4 + 8 * HEADER_WORDS || &bytes[..4] != MAGIC {
        return Err(Error::Checkpoint("missing AEL1 header".into()));
    }
    let mut words = bytes[4..4 + 8 * HEADER_WORDS]
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().expect("8-byte chunk")) as usize);
    let mut next = || words.next().expect("header word");
    let (num_users, num_items) = (next(), next());
    let dims = [next(), next(), next()];
    let (flags, num_experts, k) = (next(), next(), next());

    let dims = HiddenDims::new(dims).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if num_users == 0 || num_items == 0 {
        return Err(Error::Checkpoint("zero users or items".into()));
    }
    let has_gate = flags as u64 & FLAG_GATE != 0;
    if flags as u64 & !FLAG_GATE != 0 {
        return Err(Error::Checkpoint(format!("unknown flags {flags:#x}")));
    }

    let model_scalars = super::count_parameters(num_users, num_items, dims, false);
    let gate_scalars = if has_gate { 2 * num_items * num_experts } else { 0 };
    let payload = &bytes[4 + 8 * HEADER_WORDS..];
    if payload.len() != 8 * (model_scalars + gate_scalars) {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter bytes, found {}",
            8 * (model_scalars + gate_scalars),
            payload.len()
        )));
    }
    let mut values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")));

    let mut model = AelModel::zeros(num_users, num_items, dims).map_err(|e| Error::Checkpoint(e.to_string()))?;
    for tensor in model.tensors_mut() {
        for (slot, v) in tensor.iter_mut().zip(&mut values) {
            *slot = v;
        }
    }
    let gating = if has_gate {
        let mut g = GatingNetwork::new(num_items, num_experts, k).map_err(|e| Error::Checkpoint(e.to_string()))?;
        for tensor in g.tensors_mut() {
            for (slot, v) in tensor.iter_mut().zip(&mut values) {
                *slot = v;
            }
        }
        Some(g)
    } else {
        None
    };
    Ok((model, gating))
}

pub fn save(path: &Path, model: &AelModel, gating: Option<&GatingNetwork>) -> Result<()> {
    let bytes = encode(model, gating)?;
    fs::write(path, bytes).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })
}

pub fn load(path: &Path) -> Result<(AelModel, Option<GatingNetwork>)> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.to_owned(),
        source,
    })?;
    decode(&bytes)
}

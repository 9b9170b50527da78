//! Bundle checkpoints: one file holding a JSON manifest plus the binary
//! blocks of every component network.
//!
//! Layout (integers little-endian):
//!
//! ```text
//! magic   b"SSB1"
//! hlen    u32; JSON manifest of `hlen` bytes (scheme, dims, architecture,
//!         dtype tag, episodes completed)
//! nnets   u32; per network: u32 block length + a `SSN1` network block
//! ```
//!
//! Network order is part of the format: C-Decision stores the K compression
//! networks, the BS Q-network, then its target; D-Decision stores the K
//! compression networks, the aggregation network, the K decision networks,
//! then the K target networks. The replay buffer is not persisted: a resumed
//! run refills it before updates restart.

use super::cdecision::{AgentBundleC, CArch};
use super::ddecision::{AgentBundleD, DArch};
use super::{DqnError, ReplayBuffer};
use crate::neural::checkpoint::{decode_network, encode_network};
use crate::neural::DenseNetwork;
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"SSB1";

#[derive(Serialize, Deserialize)]
struct HeaderC {
    format_version: u32,
    scheme: String,
    dtype: u8,
    n_channels: usize,
    n_links: usize,
    arch: CArch,
    episodes_done: usize,
}

#[derive(Serialize, Deserialize)]
struct HeaderD {
    format_version: u32,
    scheme: String,
    dtype: u8,
    n_channels: usize,
    n_links: usize,
    arch: DArch,
    episodes_done: usize,
}

fn write_frame<W: Write>(
    w: &mut W,
    header_json: &[u8],
    nets: &[Vec<u8>],
) -> Result<(), DqnError> {
    let io = |e: std::io::Error| DqnError::Checkpoint(e.to_string());
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(header_json.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(header_json).map_err(io)?;
    w.write_all(&(nets.len() as u32).to_le_bytes()).map_err(io)?;
    for block in nets {
        w.write_all(&(block.len() as u32).to_le_bytes()).map_err(io)?;
        w.write_all(block).map_err(io)?;
    }
    Ok(())
}

fn read_frame<R: Read>(r: &mut R) -> Result<(Vec<u8>, Vec<Vec<u8>>), DqnError> {
    let io = |e: std::io::Error| DqnError::Checkpoint(e.to_string());
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(DqnError::Checkpoint("bad bundle magic".into()));
    }
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4).map_err(io)?;
    let hlen = u32::from_le_bytes(len4) as usize;
    let mut header = vec![0u8; hlen];
    r.read_exact(&mut header).map_err(io)?;
    r.read_exact(&mut len4).map_err(io)?;
    let nnets = u32::from_le_bytes(len4) as usize;
    let mut nets = Vec::with_capacity(nnets);
    for _ in 0..nnets {
        r.read_exact(&mut len4).map_err(io)?;
        let blen = u32::from_le_bytes(len4) as usize;
        let mut block = vec![0u8; blen];
        r.read_exact(&mut block).map_err(io)?;
        nets.push(block);
    }
    Ok((header, nets))
}

pub fn save_bundle_c<T: Scalar, W: Write>(
    bundle: &AgentBundleC<T>,
    episodes_done: usize,
    w: &mut W,
) -> Result<(), DqnError> {
    let header = HeaderC {
        format_version: 1,
        scheme: "c-decision".into(),
        dtype: T::DTYPE.tag(),
        n_channels: bundle.n_channels,
        n_links: bundle.n_links,
        arch: bundle.arch.clone(),
        episodes_done,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| DqnError::Checkpoint(e.to_string()))?;
    let mut nets: Vec<Vec<u8>> = bundle.comp.iter().map(encode_network).collect();
    nets.push(encode_network(&bundle.q));
    nets.push(encode_network(&bundle.q_target));
    write_frame(w, &header_json, &nets)
}

pub fn load_bundle_c<T: Scalar, R: Read>(
    r: &mut R,
    buffer_capacity: usize,
) -> Result<(AgentBundleC<T>, usize), DqnError> {
    let (header_json, nets) = read_frame(r)?;
    let header: HeaderC =
        serde_json::from_slice(&header_json).map_err(|e| DqnError::Checkpoint(e.to_string()))?;
    if header.scheme != "c-decision" {
        return Err(DqnError::Checkpoint(format!(
            "expected a c-decision bundle, found {}",
            header.scheme
        )));
    }
    if header.dtype != T::DTYPE.tag() {
        return Err(DqnError::Checkpoint("dtype mismatch".into()));
    }
    let expect = header.n_links + 2;
    if nets.len() != expect {
        return Err(DqnError::Checkpoint(format!(
            "expected {expect} network blocks, found {}",
            nets.len()
        )));
    }
    let mut decoded: Vec<DenseNetwork<T>> = nets
        .iter()
        .map(|b| decode_network::<T>(b))
        .collect::<Result<_, _>>()?;
    let q_target = decoded.pop().expect("counted");
    let q = decoded.pop().expect("counted");
    let bundle = AgentBundleC {
        arch: header.arch,
        n_channels: header.n_channels,
        n_links: header.n_links,
        obs_dim: crate::env::Observation::dim(header.n_channels),
        comp: decoded,
        q,
        q_target,
        buffer: ReplayBuffer::new(buffer_capacity),
    };
    Ok((bundle, header.episodes_done))
}

pub fn save_bundle_d<T: Scalar, W: Write>(
    bundle: &AgentBundleD<T>,
    episodes_done: usize,
    w: &mut W,
) -> Result<(), DqnError> {
    let header = HeaderD {
        format_version: 1,
        scheme: "d-decision".into(),
        dtype: T::DTYPE.tag(),
        n_channels: bundle.n_channels,
        n_links: bundle.n_links,
        arch: bundle.arch.clone(),
        episodes_done,
    };
    let header_json =
        serde_json::to_vec(&header).map_err(|e| DqnError::Checkpoint(e.to_string()))?;
    let mut nets: Vec<Vec<u8>> = bundle.comp.iter().map(encode_network).collect();
    nets.push(encode_network(&bundle.agg));
    nets.extend(bundle.dec.iter().map(encode_network));
    nets.extend(bundle.dec_target.iter().map(encode_network));
    write_frame(w, &header_json, &nets)
}

pub fn load_bundle_d<T: Scalar, R: Read>(
    r: &mut R,
    buffer_capacity: usize,
) -> Result<(AgentBundleD<T>, usize), DqnError> {
    let (header_json, nets) = read_frame(r)?;
    let header: HeaderD =
        serde_json::from_slice(&header_json).map_err(|e| DqnError::Checkpoint(e.to_string()))?;
    if header.scheme != "d-decision" {
        return Err(DqnError::Checkpoint(format!(
            "expected a d-decision bundle, found {}",
            header.scheme
        )));
    }
    if header.dtype != T::DTYPE.tag() {
        return Err(DqnError::Checkpoint("dtype mismatch".into()));
    }
    let k = header.n_links;
    let expect = 3 * k + 1;
    if nets.len() != expect {
        return Err(DqnError::Checkpoint(format!(
            "expected {expect} network blocks, found {}",
            nets.len()
        )));
    }
    let decoded: Vec<DenseNetwork<T>> = nets
        .iter()
        .map(|b| decode_network::<T>(b))
        .collect::<Result<_, _>>()?;
    let mut it = decoded.into_iter();
    let comp: Vec<_> = (&mut it).take(k).collect();
    let agg = it.next().expect("counted");
    let dec: Vec<_> = (&mut it).take(k).collect();
    let dec_target: Vec<_> = (&mut it).take(k).collect();
    let bundle = AgentBundleD {
        arch: header.arch,
        n_channels: header.n_channels,
        n_links: header.n_links,
        obs_dim: crate::env::Observation::dim(header.n_channels),
        comp,
        agg,
        dec,
        dec_target,
        buffer: ReplayBuffer::new(buffer_capacity),
    };
    Ok((bundle, header.episodes_done))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dqn::cdecision::CArch;
    use crate::dqn::ddecision::DArch;
    use crate::seeding::{substream, STREAM_INIT};

    #[test]
    fn c_bundle_round_trip_is_bit_exact() {
        let mut rng = substream(91, STREAM_INIT);
        let arch = CArch {
            n_k: 2,
            comp_hidden: vec![5, 4],
            binary_feedback: true,
            feedback_bits: 6,
            bs_hidden: vec![8],
        };
        let bundle: AgentBundleC<f32> = AgentBundleC::new(2, 3, arch, 32, &mut rng).unwrap();
        let mut bytes = Vec::new();
        save_bundle_c(&bundle, 17, &mut bytes).unwrap();
        let (loaded, episodes) =
            load_bundle_c::<f32, _>(&mut bytes.as_slice(), 32).unwrap();
        assert_eq!(episodes, 17);
        assert_eq!(loaded.arch, bundle.arch);
        assert!(loaded.q.parameters_equal(&bundle.q));
        assert!(loaded.q_target.parameters_equal(&bundle.q_target));
        for (a, b) in loaded.comp.iter().zip(bundle.comp.iter()) {
            assert!(a.parameters_equal(b));
        }
        let mut again = Vec::new();
        save_bundle_c(&loaded, 17, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn d_bundle_round_trip_is_bit_exact() {
        let mut rng = substream(92, STREAM_INIT);
        let arch = DArch {
            n_k: 2,
            comp_hidden: vec![5],
            binary_feedback: false,
            feedback_bits: 4,
            n_g: 3,
            agg_hidden: vec![6],
            binary_agi: true,
            n_g_bits: 4,
            dec_hidden: vec![5],
        };
        let bundle: AgentBundleD<f32> = AgentBundleD::new(2, 2, arch, 32, &mut rng).unwrap();
        let mut bytes = Vec::new();
        save_bundle_d(&bundle, 5, &mut bytes).unwrap();
        let (loaded, episodes) =
            load_bundle_d::<f32, _>(&mut bytes.as_slice(), 32).unwrap();
        assert_eq!(episodes, 5);
        assert!(loaded.agg.parameters_equal(&bundle.agg));
        for (a, b) in loaded.dec.iter().zip(bundle.dec.iter()) {
            assert!(a.parameters_equal(b));
        }
        let mut again = Vec::new();
        save_bundle_d(&loaded, 5, &mut again).unwrap();
        assert_eq!(bytes, again);
    }

    #[test]
    fn scheme_mismatch_is_rejected() {
        let mut rng = substream(93, STREAM_INIT);
        let bundle: AgentBundleC<f32> =
            AgentBundleC::new(2, 2, CArch::default(), 32, &mut rng).unwrap();
        let mut bytes = Vec::new();
        save_bundle_c(&bundle, 0, &mut bytes).unwrap();
        assert!(load_bundle_d::<f32, _>(&mut bytes.as_slice(), 32).is_err());
    }
}

//! Binary network serialization.
//!
//! Format `SSN1` (all integers little-endian):
//!
//! ```text
//! magic    b"SSN1"
//! dtype    u8      0 = f32, 1 = f64
//! in_dim   u32     network input width
//! n_layers u32
//! layers   n_layers records:
//!   kind u8        0 = dense, 1 = sign
//!   dense only:
//!     out  u32     output width (input width chains from the previous layer)
//!     act  u8      0 = linear, 1 = relu, 2 = tanh
//!     w    in·out scalars, row-major, raw little-endian bit patterns
//!     b    out scalars
//!     opt  u8      1 if RMSProp accumulators follow (vw then vb), else 0
//! ```
//!
//! Scalars are written as exact bit patterns, so a load reproduces the saved
//! network bit for bit.

use super::{Activation, DenseNetwork, Layer, NeuralError, RmsPropState};
use crate::scalar::{Dtype, Scalar};
use ndarray::{Array1, Array2};
use std::io::{Read, Write};

const MAGIC: &[u8; 4] = b"SSN1";

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_scalars<T: Scalar>(out: &mut Vec<u8>, values: impl Iterator<Item = T>) {
    for v in values {
        v.write_le(out);
    }
}

/// Serialize a network, including RMSProp state, to a byte vector.
pub fn encode_network<T: Scalar>(net: &DenseNetwork<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.push(T::DTYPE.tag());
    put_u32(&mut out, net.input_dim() as u32);
    put_u32(&mut out, net.num_layers() as u32);
    for idx in 0..net.num_layers() {
        match net.layer(idx) {
            Layer::Dense {
                weights,
                biases,
                activation,
            } => {
                out.push(0);
                put_u32(&mut out, weights.ncols() as u32);
                out.push(activation.tag());
                put_scalars(&mut out, weights.iter().copied());
                put_scalars(&mut out, biases.iter().copied());
                match net.opt_state(idx) {
                    Some(state) => {
                        out.push(1);
                        put_scalars(&mut out, state.vw.iter().copied());
                        put_scalars(&mut out, state.vb.iter().copied());
                    }
                    None => out.push(0),
                }
            }
            Layer::Sign => out.push(1),
        }
    }
    out
}

pub fn write_network<T: Scalar, W: Write>(net: &DenseNetwork<T>, w: &mut W) -> std::io::Result<()> {
    w.write_all(&encode_network(net))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NeuralError> {
        if self.pos + n > self.buf.len() {
            return Err(NeuralError::Checkpoint("truncated network block".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, NeuralError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, NeuralError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn scalars<T: Scalar>(&mut self, n: usize) -> Result<Vec<T>, NeuralError> {
        let width = T::DTYPE.size_bytes();
        let bytes = self.take(n * width)?;
        Ok(bytes.chunks_exact(width).map(T::read_le).collect())
    }
}

/// Reconstruct a network from bytes produced by [`encode_network`].
pub fn decode_network<T: Scalar>(bytes: &[u8]) -> Result<DenseNetwork<T>, NeuralError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(NeuralError::Checkpoint("bad magic".into()));
    }
    let dtype = Dtype::from_tag(c.u8()?)
        .ok_or_else(|| NeuralError::Checkpoint("unknown dtype tag".into()))?;
    if dtype != T::DTYPE {
        return Err(NeuralError::Checkpoint(format!(
            "dtype mismatch: file holds {:?}, caller expects {:?}",
            dtype,
            T::DTYPE
        )));
    }
    let input_dim = c.u32()? as usize;
    let n_layers = c.u32()? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    let mut opt = Vec::with_capacity(n_layers);
    let mut in_dim = input_dim;
    for _ in 0..n_layers {
        match c.u8()? {
            0 => {
                let out_dim = c.u32()? as usize;
                let activation = Activation::from_tag(c.u8()?)
                    .ok_or_else(|| NeuralError::Checkpoint("unknown activation tag".into()))?;
                let w = c.scalars::<T>(in_dim * out_dim)?;
                let b = c.scalars::<T>(out_dim)?;
                let weights = Array2::from_shape_vec((in_dim, out_dim), w)
                    .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
                let biases = Array1::from_vec(b);
                let state = if c.u8()? == 1 {
                    let vw = c.scalars::<T>(in_dim * out_dim)?;
                    let vb = c.scalars::<T>(out_dim)?;
                    Some(RmsPropState {
                        vw: Array2::from_shape_vec((in_dim, out_dim), vw)
                            .map_err(|e| NeuralError::Checkpoint(e.to_string()))?,
                        vb: Array1::from_vec(vb),
                    })
                } else {
                    None
                };
                layers.push(Layer::Dense {
                    weights,
                    biases,
                    activation,
                });
                opt.push(state);
                in_dim = out_dim;
            }
            1 => {
                layers.push(Layer::Sign);
                opt.push(None);
            }
            k => {
                return Err(NeuralError::Checkpoint(format!("unknown layer kind {k}")));
            }
        }
    }
    if c.pos != bytes.len() {
        return Err(NeuralError::Checkpoint("trailing bytes".into()));
    }
    Ok(DenseNetwork::from_parts(input_dim, layers, opt))
}

pub fn read_network<T: Scalar, R: Read>(r: &mut R) -> Result<DenseNetwork<T>, NeuralError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| NeuralError::Checkpoint(e.to_string()))?;
    decode_network(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::LayerSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut net: DenseNetwork<f32> = DenseNetwork::new(
            7,
            &[
                LayerSpec::dense(5, Activation::Relu),
                LayerSpec::dense(3, Activation::Tanh),
                LayerSpec::sign(),
                LayerSpec::dense(2, Activation::Linear),
            ],
            &mut rng,
        );
        // dirty the optimizer state so it round-trips too
        let x = ndarray::Array2::from_elem((2, 7), 0.25f32);
        let (y, tape) = net.forward_tape(x.view()).unwrap();
        let (grads, _) = net.backward(&tape, y.view()).unwrap();
        net.apply_rmsprop(&grads, 0.001, 0.9, 1e-7);

        let bytes = encode_network(&net);
        let loaded: DenseNetwork<f32> = decode_network(&bytes).unwrap();
        assert!(net.parameters_equal(&loaded));
        assert_eq!(bytes, encode_network(&loaded));
    }

    #[test]
    fn dtype_mismatch_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let net: DenseNetwork<f64> =
            DenseNetwork::new(2, &[LayerSpec::dense(2, Activation::Linear)], &mut rng);
        let bytes = encode_network(&net);
        assert!(decode_network::<f32>(&bytes).is_err());
    }

    #[test]
    fn truncated_block_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let net: DenseNetwork<f32> =
            DenseNetwork::new(3, &[LayerSpec::dense(2, Activation::Tanh)], &mut rng);
        let bytes = encode_network(&net);
        assert!(decode_network::<f32>(&bytes[..bytes.len() - 3]).is_err());
    }
}

//! Debug dump: four little-endian `u32` dims followed by little-endian `f32` data.

use std::io::{self, Read, Write};

use super::Tensor;
use crate::Scalar;

impl<F: Scalar> Tensor<F> {
    pub fn write_dump<W: Write>(&self, mut w: W) -> io::Result<()> {
        for d in self.shape() {
            let d = u32::try_from(d).map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "dim exceeds u32"))?;
            w.write_all(&d.to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.numel() * 4);
        for v in self.data().iter() {
            buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_dump<R: Read>(mut r: R) -> io::Result<Self> {
        let mut shape = [0usize; 4];
        let mut word = [0u8; 4];
        for d in shape.iter_mut() {
            r.read_exact(&mut word)?;
            *d = u32::from_le_bytes(word) as usize;
        }
        let count = shape.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d));
        let count = count.ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "dump shape overflows"))?;
        let mut bytes = vec![0u8; count * 4];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| F::lit(f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64))
            .collect();
        Tensor::new(shape, data).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let t = Tensor::<f32>::new([1, 2, 1, 3], vec![0.0, -1.5, 3.25, 1e-7, f32::MAX, 7.0]).unwrap();
        let mut buf = Vec::new();
        t.write_dump(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 24);
        assert_eq!(&buf[..4], &1u32.to_le_bytes());
        let back = Tensor::<f32>::read_dump(buf.as_slice()).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.to_vec(), t.to_vec());
    }

    #[test]
    fn truncated_dump_is_error() {
        let t = Tensor::<f32>::zeros([1, 1, 2, 2]);
        let mut buf = Vec::new();
        t.write_dump(&mut buf).unwrap();
        buf.pop();
        assert!(Tensor::<f32>::read_dump(buf.as_slice()).is_err());
    }
}

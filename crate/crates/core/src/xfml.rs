//! Binary container for transforms, coupled models, dictionaries and plain
//! matrices.
//!
//! Every file starts with the magic bytes `XFML` and a little-endian `u32`
//! format version. Matrices are stored row-major as little-endian `f64`.
//!
//! | payload    | layout after the header                                  |
//! |------------|----------------------------------------------------------|
//! | transform  | `d: u32`, `T` (d² f64), `λ: f64`, `ε: f64`, `τ: u32`     |
//! | coupled    | face transform block, skull transform block, `W` (d² f64), `γ: f64`, `ρ: f64` |
//! | matrix     | `rows: u32`, `cols: u32`, data (rows·cols f64)           |
//! | dictionary | matrix block, `s: u32`                                   |

use std::path::Path;

use nalgebra::DMatrix;

use crate::coupled::CoupledModel;
use crate::dictbase::Dictionary;
use crate::error::{Error, Result};
use crate::tlcore::{TransformModel, TransformParams};

pub const MAGIC: &[u8; 4] = b"XFML";
pub const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn new() -> Self {
        let mut w = Writer(Vec::new());
        w.0.extend_from_slice(MAGIC);
        w.u32(VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn count(&mut self, v: usize) -> Result<()> {
        let v = u32::try_from(v).map_err(|_| Error::argument(format!("{v} does not fit in u32")))?;
        self.u32(v);
        Ok(())
    }

    fn row_major(&mut self, m: &DMatrix<f64>) {
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                self.f64(m[(r, c)]);
            }
        }
    }

    fn transform(&mut self, t: &DMatrix<f64>, params: &TransformParams) -> Result<()> {
        self.count(t.nrows())?;
        self.row_major(t);
        self.f64(params.lambda);
        self.f64(params.epsilon);
        self.count(params.tau)
    }

    fn matrix(&mut self, m: &DMatrix<f64>) -> Result<()> {
        self.count(m.nrows())?;
        self.count(m.ncols())?;
        self.row_major(m);
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::data("not an XFML file (bad magic)"));
        }
        let mut r = Reader { bytes, pos: 4 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::data(format!("unsupported XFML version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::data("truncated XFML file"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn row_major(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let len = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::data("matrix size overflows"))?;
        let raw = self.take(len)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }

    fn transform(&mut self) -> Result<(DMatrix<f64>, f64, f64, usize)> {
        let d = self.u32()? as usize;
        if d == 0 {
            return Err(Error::data("transform dimension is zero"));
        }
        let t = self.row_major(d, d)?;
        let lambda = self.f64()?;
        let epsilon = self.f64()?;
        let tau = self.u32()? as usize;
        Ok((t, lambda, epsilon, tau))
    }

    fn matrix(&mut self) -> Result<DMatrix<f64>> {
        let rows = self.u32()? as usize;
        let cols = self.u32()? as usize;
        self.row_major(rows, cols)
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::data(format!(
                "{} trailing bytes after XFML payload",
                self.bytes.len() - self.pos
            )));
        }
        Ok(())
    }
}

fn params_with(lambda: f64, epsilon: f64, tau: usize) -> TransformParams {
    TransformParams {
        lambda,
        epsilon,
        tau,
        ..TransformParams::default()
    }
}

pub fn transform_to_bytes(model: &TransformModel) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.transform(&model.t, &model.params)?;
    Ok(w.0)
}

/// Restores `T`, `λ`, `ε` and `τ`; other parameters take their defaults and
/// the objective trace is empty.
pub fn transform_from_bytes(bytes: &[u8]) -> Result<TransformModel> {
    let mut r = Reader::new(bytes)?;
    let (t, lambda, epsilon, tau) = r.transform()?;
    r.finish()?;
    Ok(TransformModel {
        t,
        params: params_with(lambda, epsilon, tau),
        objective_trace: Vec::new(),
    })
}

pub fn coupled_to_bytes(model: &CoupledModel) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.transform(&model.t_face, &model.params)?;
    w.transform(&model.t_skull, &model.params)?;
    w.row_major(&model.w);
    w.f64(model.gamma);
    w.f64(model.rho);
    Ok(w.0)
}

pub fn coupled_from_bytes(bytes: &[u8]) -> Result<CoupledModel> {
    let mut r = Reader::new(bytes)?;
    let (t_face, lambda, epsilon, tau) = r.transform()?;
    let (t_skull, ..) = r.transform()?;
    if t_skull.nrows() != t_face.nrows() {
        return Err(Error::data("face and skull transforms differ in size"));
    }
    let d = t_face.nrows();
    let w = r.row_major(d, d)?;
    let gamma = r.f64()?;
    let rho = r.f64()?;
    r.finish()?;
    Ok(CoupledModel {
        t_face,
        t_skull,
        w,
        gamma,
        rho,
        params: params_with(lambda, epsilon, tau),
        joint_trace: Vec::new(),
        face_trace: Vec::new(),
        skull_trace: Vec::new(),
    })
}

pub fn matrix_to_bytes(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.matrix(m)?;
    Ok(w.0)
}

pub fn matrix_from_bytes(bytes: &[u8]) -> Result<DMatrix<f64>> {
    let mut r = Reader::new(bytes)?;
    let m = r.matrix()?;
    r.finish()?;
    Ok(m)
}

pub fn dictionary_to_bytes(dict: &Dictionary) -> Result<Vec<u8>> {
    let mut w = Writer::new();
    w.matrix(&dict.atoms)?;
    w.count(dict.sparsity)?;
    Ok(w.0)
}

pub fn dictionary_from_bytes(bytes: &[u8]) -> Result<Dictionary> {
    let mut r = Reader::new(bytes)?;
    let atoms = r.matrix()?;
    let s = r.u32()? as usize;
    r.finish()?;
    Dictionary::new(atoms, s).map_err(|e| Error::data(format!("invalid dictionary: {e}")))
}

pub fn write_file(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_file(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_transform() -> TransformModel {
        TransformModel {
            t: DMatrix::from_row_slice(2, 2, &[1.0, -0.5, f64::MIN_POSITIVE, 3.25]),
            params: params_with(0.1, 2.0, 1),
            objective_trace: vec![1.0],
        }
    }

    #[test]
    fn transform_layout_is_fixed() {
        let bytes = transform_to_bytes(&sample_transform()).unwrap();
        assert_eq!(&bytes[..4], b"XFML");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        // row-major: T[0,1] comes second
        assert_eq!(&bytes[20..28], &(-0.5f64).to_le_bytes());
        assert_eq!(bytes.len(), 12 + 4 * 8 + 8 + 8 + 4);
        assert_eq!(&bytes[bytes.len() - 4..], &1u32.to_le_bytes());
    }

    #[test]
    fn transform_round_trip() {
        let model = sample_transform();
        let back = transform_from_bytes(&transform_to_bytes(&model).unwrap()).unwrap();
        assert_eq!(back.t, model.t);
        assert_eq!(back.params.lambda.to_bits(), model.params.lambda.to_bits());
        assert_eq!(back.params.tau, 1);
    }

    #[test]
    fn rejects_bad_magic_truncation_and_trailing_bytes() {
        let bytes = transform_to_bytes(&sample_transform()).unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'Y';
        assert!(matches!(transform_from_bytes(&bad), Err(Error::Data(_))));
        assert!(transform_from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut long = bytes.clone();
        long.push(0);
        assert!(transform_from_bytes(&long).is_err());
        let mut v2 = bytes;
        v2[4] = 2;
        assert!(transform_from_bytes(&v2).is_err());
    }

    #[test]
    fn dictionary_round_trip() {
        let dict = Dictionary::new(DMatrix::identity(3, 2), 1).unwrap();
        let back = dictionary_from_bytes(&dictionary_to_bytes(&dict).unwrap()).unwrap();
        assert_eq!(back.atoms, dict.atoms);
        assert_eq!(back.sparsity, 1);
    }
}

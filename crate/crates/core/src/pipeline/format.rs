//! Binary model file.
//!
//! All integers and floats are little-endian; floats are raw IEEE-754 bits.
//!
//! ```text
//! magic "DOC1" | version u16 | schema_hash [32]
//! columns:   u32 count, then per column u32 len + UTF-8 bytes
//! scaler:    u32 n, n × f64 min, n × f64 max
//! network:   u8 activation, u32 layers, per layer u32 rows, u32 cols, rows·cols × f64
//! center:    u32 p, p × f64
//! svdd:      f64 lambda, f64 radius_proxy, f64 initial_mean_distance, f64 final_mean_distance
//! history:   u32 count, per entry u32 epoch + f64 loss
//! histogram: u32 dims, u32 k, per dim f64 lo, f64 hi, k × f64 heights
//! decision:  f64 threshold, f64 contamination
//! crc32 (IEEE) of every preceding byte, u32
//! ```

use crate::data::{ScalerParams, Schema};
use crate::error::ModelError;
use crate::hbos::{Histogram, HistogramSet};
use crate::matrix::Matrix;
use crate::nn::{Activation, MlpParams};
use crate::svdd::{EpochLoss, SvddModel};

use super::DocModel;

pub const MAGIC: [u8; 4] = *b"DOC1";
pub const FORMAT_VERSION: u16 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: usize) {
        let v = u32::try_from(v).expect("model field count exceeds u32");
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64s(&mut self, vs: &[f64]) {
        vs.iter().for_each(|&v| self.f64(v));
    }
}

pub(super) fn encode(m: &DocModel) -> Vec<u8> {
    let mut w = Writer(Vec::with_capacity(256 + 8 * m.svdd.params.param_count()));
    w.0.extend_from_slice(&MAGIC);
    w.u16(FORMAT_VERSION);
    w.0.extend_from_slice(&m.schema_hash());

    w.u32(m.schema.columns.len());
    for c in &m.schema.columns {
        w.u32(c.len());
        w.0.extend_from_slice(c.as_bytes());
    }

    w.u32(m.scaler.dim());
    w.f64s(&m.scaler.mins);
    w.f64s(&m.scaler.maxs);

    let params = &m.svdd.params;
    w.u8(params.activation().code());
    w.u32(params.layers().len());
    for layer in params.layers() {
        w.u32(layer.rows());
        w.u32(layer.cols());
        w.f64s(layer.as_slice());
    }

    w.u32(m.svdd.center.len());
    w.f64s(&m.svdd.center);
    w.f64(m.svdd.lambda);
    w.f64(m.svdd.radius_proxy);
    w.f64(m.svdd.initial_mean_distance);
    w.f64(m.svdd.final_mean_distance);
    w.u32(m.svdd.train_history.len());
    for e in &m.svdd.train_history {
        w.0.extend_from_slice(&e.epoch.to_le_bytes());
        w.f64(e.loss);
    }

    w.u32(m.hist.dims.len());
    w.u32(m.hist.bins);
    for h in &m.hist.dims {
        w.f64(h.lo);
        w.f64(h.hi);
        w.f64s(&h.heights);
    }

    w.f64(m.threshold);
    w.f64(m.contamination);

    let crc = crc32fast::hash(&w.0);
    w.0.extend_from_slice(&crc.to_le_bytes());
    w.0
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8], ModelError> {
        let remaining = self.buf.len() - self.pos;
        if n > remaining {
            return Err(ModelError::Truncated {
                field,
                needed: n - remaining,
            });
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8, ModelError> {
        Ok(self.take(1, field)?[0])
    }

    fn u16(&mut self, field: &'static str) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(
            self.take(2, field)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self, field: &'static str) -> Result<usize, ModelError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().expect("4 bytes")) as usize)
    }

    fn f64(&mut self, field: &'static str) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(
            self.take(8, field)?.try_into().expect("8 bytes"),
        ))
    }

    /// Reads `n` doubles, checking the length before allocating.
    fn f64s(&mut self, n: usize, field: &'static str) -> Result<Vec<f64>, ModelError> {
        let bytes = self.take(
            n.checked_mul(8)
                .ok_or(ModelError::Malformed(format!("{field} count overflows")))?,
            field,
        )?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

fn malformed(msg: impl Into<String>) -> ModelError {
    ModelError::Malformed(msg.into())
}

pub(super) fn decode(bytes: &[u8]) -> Result<DocModel, ModelError> {
    if bytes.len() < MAGIC.len() || bytes[..MAGIC.len()] != MAGIC {
        return Err(ModelError::BadMagic);
    }
    let mut r = Reader {
        buf: bytes,
        pos: MAGIC.len(),
    };
    let version = r.u16("format version")?;
    if version != FORMAT_VERSION {
        return Err(ModelError::UnsupportedVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let stored_hash: [u8; 32] = r.take(32, "schema hash")?.try_into().expect("32 bytes");

    let n_cols = r.u32("column count")?;
    let mut columns = Vec::with_capacity(n_cols.min(bytes.len()));
    for _ in 0..n_cols {
        let len = r.u32("column name length")?;
        let raw = r.take(len, "column name")?;
        columns.push(
            String::from_utf8(raw.to_vec()).map_err(|_| malformed("column name is not UTF-8"))?,
        );
    }

    let n = r.u32("scaler dimension")?;
    let mins = r.f64s(n, "scaler minima")?;
    let maxs = r.f64s(n, "scaler maxima")?;

    let activation = r.u8("activation")?;
    let activation = Activation::from_code(activation)
        .ok_or_else(|| malformed(format!("unknown activation code {activation}")))?;
    let n_layers = r.u32("layer count")?;
    let mut layers = Vec::with_capacity(n_layers.min(64));
    for _ in 0..n_layers {
        let rows = r.u32("layer rows")?;
        let cols = r.u32("layer cols")?;
        let count = rows
            .checked_mul(cols)
            .ok_or_else(|| malformed("layer shape overflows"))?;
        let data = r.f64s(count, "layer weights")?;
        layers.push(Matrix::from_vec(rows, cols, data).map_err(|e| malformed(e.to_string()))?);
    }

    let p = r.u32("center dimension")?;
    let center = r.f64s(p, "center")?;
    let lambda = r.f64("lambda")?;
    let radius_proxy = r.f64("radius proxy")?;
    let initial_mean_distance = r.f64("initial mean distance")?;
    let final_mean_distance = r.f64("final mean distance")?;
    let n_hist = r.u32("history length")?;
    let mut train_history = Vec::with_capacity(n_hist.min(bytes.len() / 12));
    for _ in 0..n_hist {
        let epoch = u32::from_le_bytes(r.take(4, "history epoch")?.try_into().expect("4 bytes"));
        let loss = r.f64("history loss")?;
        train_history.push(EpochLoss { epoch, loss });
    }

    let dims = r.u32("histogram dimension")?;
    let bins = r.u32("histogram bins")?;
    let mut hist_dims = Vec::with_capacity(dims.min(bytes.len() / 16));
    for _ in 0..dims {
        let lo = r.f64("histogram lo")?;
        let hi = r.f64("histogram hi")?;
        let heights = r.f64s(bins, "histogram heights")?;
        hist_dims.push(Histogram { lo, hi, heights });
    }

    let threshold = r.f64("threshold")?;
    let contamination = r.f64("contamination")?;

    let body_end = r.pos;
    let stored_crc = u32::from_le_bytes(r.take(4, "checksum")?.try_into().expect("4 bytes"));
    if r.pos != bytes.len() {
        return Err(malformed(format!(
            "{} trailing byte(s) after checksum",
            bytes.len() - r.pos
        )));
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if computed != stored_crc {
        return Err(ModelError::Checksum {
            stored: stored_crc,
            computed,
        });
    }

    let schema = Schema::new(columns);
    if schema.hash() != stored_hash {
        return Err(malformed(
            "schema hash does not match the stored column list",
        ));
    }
    let params =
        MlpParams::from_layers(layers, activation).map_err(|e| malformed(e.to_string()))?;
    if params.input_dim() != n || schema.columns.len() != n {
        return Err(malformed(
            "scaler, schema and network input dimensions disagree",
        ));
    }
    if center.len() != params.output_dim() || dims != p {
        return Err(malformed(
            "embedding, center and histogram dimensions disagree",
        ));
    }
    if bins == 0 {
        return Err(malformed("histogram has zero bins"));
    }

    Ok(DocModel {
        svdd: SvddModel {
            params,
            center,
            lambda,
            radius_proxy,
            train_history,
            initial_mean_distance,
            final_mean_distance,
        },
        hist: HistogramSet {
            bins,
            dims: hist_dims,
        },
        threshold,
        contamination,
        scaler: ScalerParams { mins, maxs },
        schema,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hbos::fit_histograms;

    fn tiny() -> DocModel {
        let params = MlpParams::init(&[3, 4, 2], Activation::LeakyRelu, 5).unwrap();
        let z = Matrix::from_rows(&[[0.1, 0.2], [0.3, 0.1], [0.2, 0.2]]).unwrap();
        DocModel {
            svdd: SvddModel {
                params,
                center: vec![0.1, -0.1],
                lambda: 1e-4,
                radius_proxy: 0.5,
                train_history: vec![EpochLoss {
                    epoch: 1,
                    loss: 0.25,
                }],
                initial_mean_distance: 0.7,
                final_mean_distance: 0.3,
            },
            hist: fit_histograms(&z, 4).unwrap(),
            threshold: 1.25,
            contamination: 0.1,
            scaler: ScalerParams {
                mins: vec![0.0, 1.0, 2.0],
                maxs: vec![1.0, 3.0, 2.0],
            },
            schema: Schema::new(vec!["a".into(), "b".into(), "c".into()]),
        }
    }

    #[test]
    fn round_trip() {
        let m = tiny();
        let bytes = encode(&m);
        assert_eq!(&bytes[..4], b"DOC1");
        assert_eq!(decode(&bytes).unwrap(), m);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&tiny());
        bytes[0] = b'X';
        let err = decode(&bytes).unwrap_err();
        assert!(matches!(err, ModelError::BadMagic));
        assert_eq!(err.to_string(), "not a DOC model file");
        assert!(matches!(decode(b"DO"), Err(ModelError::BadMagic)));
    }

    #[test]
    fn version_mismatch() {
        let mut bytes = encode(&tiny());
        bytes[4] = 9;
        assert!(matches!(
            decode(&bytes),
            Err(ModelError::UnsupportedVersion { found: 9, .. })
        ));
    }

    #[test]
    fn flipped_payload_byte_fails_checksum() {
        let mut bytes = encode(&tiny());
        let i = bytes.len() - 12;
        bytes[i] ^= 0x40;
        assert!(matches!(decode(&bytes), Err(ModelError::Checksum { .. })));
    }

    #[test]
    fn truncation_detected() {
        let bytes = encode(&tiny());
        for cut in [7, 40, bytes.len() / 2, bytes.len() - 1] {
            assert!(
                matches!(decode(&bytes[..cut]), Err(ModelError::Truncated { .. })),
                "cut at {cut}"
            );
        }
    }
}

//! Sampled (input, output) coefficient pairs: draw initial data, run the
//! Galerkin solver, encode both ends, and persist everything bit-exactly.
//!
//! Record `i` depends only on the master seed and `i`, through a
//! splitmix64-derived per-record seed feeding a ChaCha stream. Generation
//! order therefore cannot change the data, and any record can be reproduced
//! in isolation. On disk a dataset is a directory of three files:
//! `manifest.json` with every generation parameter and an FNV-1a checksum
//! per payload, plus `inputs.f64` and `outputs.f64` holding row-major
//! little-endian doubles.

use crate::basis::BasisSet;
use crate::codec::{encode_h, encode_y, CodecError};
use crate::galerkin::{integrate, GalerkinState, SolverConfig, SolverError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io;
use std::path::Path;
use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("record {record} remained unstable after {attempts} dt halvings")]
    RecordUnstable { record: usize, attempts: usize },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid generation request: {0}")]
    InvalidRequest(String),
    #[error("dataset i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("manifest parse error: {0}")]
    Manifest(#[from] serde_json::Error),
    #[error("checksum mismatch in {file}")]
    ChecksumMismatch { file: String },
    #[error("{file} truncated or padded: expected {expected} bytes, found {got}")]
    PayloadSize {
        file: String,
        expected: usize,
        got: usize,
    },
    #[error("unsupported dataset format version {got}, this build reads {expected}")]
    VersionMismatch { got: u32, expected: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    UniformBox,
    UniformSphere,
}

/// How initial data is drawn: `active_modes` coefficients inside the
/// energy ball of radius `radius`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub dim: usize,
    pub radius: f64,
    pub active_modes: usize,
    pub distribution: Distribution,
    pub seed: u64,
}

impl SampleSpec {
    fn validate(&self) -> Result<(), DatasetError> {
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(DatasetError::InvalidRequest(format!(
                "radius must be positive and finite, got {}",
                self.radius
            )));
        }
        if self.active_modes == 0 {
            return Err(DatasetError::InvalidRequest(
                "active mode count must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-record seed: mixes the master seed with the record index so records
/// are reproducible independently of generation order.
pub fn record_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(1)))
}

/// Draw the coefficient vector of record `index` under `spec`.
pub fn sample_initial(spec: &SampleSpec, index: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(record_seed(spec.seed, index));
    let d_active = spec.active_modes;
    match spec.distribution {
        Distribution::UniformBox => {
            let side = spec.radius / (d_active as f64).sqrt();
            (0..d_active).map(|_| rng.random_range(-side..=side)).collect()
        }
        Distribution::UniformSphere => loop {
            let gauss = gaussian_vector(&mut rng, d_active);
            let norm = gauss.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > 1e-12 {
                break gauss.iter().map(|g| g / norm * spec.radius).collect();
            }
        },
    }
}

/// Standard normals by Box-Muller; rand ships no Gaussian sampler and the
/// byte-determinism contract is easier to own with an explicit transform.
fn gaussian_vector(rng: &mut ChaCha8Rng, count: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(count + 1);
    while out.len() < count {
        let u1: f64 = 1.0 - rng.random::<f64>(); // (0, 1]
        let u2: f64 = rng.random();
        let radius = (-2.0 * u1.ln()).sqrt();
        let angle = 2.0 * std::f64::consts::PI * u2;
        out.push(radius * angle.cos());
        out.push(radius * angle.sin());
    }
    out.truncate(count);
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub version: u32,
    pub n: usize,
    pub d_h: usize,
    pub d_y: usize,
    pub dim: usize,
    pub m: usize,
    pub t_star: f64,
    pub solver: SolverConfig,
    pub sample: SampleSpec,
    /// Uniform output noise half-width; 0 means clean data.
    pub output_noise: f64,
    pub checksum_inputs: String,
    pub checksum_outputs: String,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    /// Row-major `n x d_h`.
    pub inputs: Vec<f64>,
    /// Row-major `n x d_y`.
    pub outputs: Vec<f64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.manifest.n
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.n == 0
    }

    pub fn input_row(&self, i: usize) -> &[f64] {
        let d = self.manifest.d_h;
        &self.inputs[i * d..(i + 1) * d]
    }

    pub fn output_row(&self, i: usize) -> &[f64] {
        let d = self.manifest.d_y;
        &self.outputs[i * d..(i + 1) * d]
    }

    /// Seed that generated record `i`, recomputed from the master seed.
    pub fn record_seed(&self, i: usize) -> u64 {
        record_seed(self.manifest.sample.seed, i as u64)
    }
}

const INSTABILITY_RETRIES: usize = 2;

/// Integrate one record's initial data, halving dt on instability.
pub(crate) fn solve_with_retries(
    full: &GalerkinState,
    cfg: &SolverConfig,
    tensor: &crate::tensor::StructureTensor,
    basis: &BasisSet,
    record: usize,
) -> Result<crate::galerkin::Trajectory, DatasetError> {
    let mut attempt_cfg = *cfg;
    for _ in 0..=INSTABILITY_RETRIES {
        match integrate(full, &attempt_cfg, tensor, basis) {
            Ok(traj) => return Ok(traj),
            Err(SolverError::Unstable { .. }) => {
                attempt_cfg.dt /= 2.0;
            }
            Err(other) => return Err(other.into()),
        }
    }
    Err(DatasetError::RecordUnstable {
        record,
        attempts: INSTABILITY_RETRIES,
    })
}

/// Generate `n` records: sample, decode, integrate, encode at `t_star`.
pub fn generate(
    spec: &SampleSpec,
    cfg: &SolverConfig,
    basis: &BasisSet,
    n: usize,
    d_h: usize,
    d_y: usize,
    t_star: f64,
) -> Result<Dataset, DatasetError> {
    generate_with_noise(spec, cfg, basis, n, d_h, d_y, t_star, 0.0)
}

/// [`generate`] with optional uniform output noise of half-width
/// `output_noise`; the clean contract is noise 0 and nothing in the
/// verification harness uses noisy data.
#[allow(clippy::too_many_arguments)]
pub fn generate_with_noise(
    spec: &SampleSpec,
    cfg: &SolverConfig,
    basis: &BasisSet,
    n: usize,
    d_h: usize,
    d_y: usize,
    t_star: f64,
    output_noise: f64,
) -> Result<Dataset, DatasetError> {
    spec.validate()?;
    let m = basis.len();
    if d_h > m || d_y > m {
        return Err(DatasetError::InvalidRequest(format!(
            "code widths d_h={d_h}, d_y={d_y} must fit the Galerkin order m={m}"
        )));
    }
    if spec.active_modes > m {
        return Err(DatasetError::InvalidRequest(format!(
            "{} active modes exceed the Galerkin order {m}",
            spec.active_modes
        )));
    }
    if spec.dim != basis.dim {
        return Err(DatasetError::InvalidRequest(format!(
            "sample dimension {} does not match basis dimension {}",
            spec.dim, basis.dim
        )));
    }
    if !(t_star > 0.0 && t_star <= cfg.t_final) {
        return Err(DatasetError::InvalidRequest(format!(
            "t_star={t_star} must lie in (0, t_final={}]",
            cfg.t_final
        )));
    }
    if !output_noise.is_finite() || output_noise < 0.0 {
        return Err(DatasetError::InvalidRequest(
            "output noise half-width must be nonnegative and finite".into(),
        ));
    }

    let tensor = crate::tensor::assemble_structure_tensor(basis);
    let gen_one = |i: usize| -> Result<(Vec<f64>, Vec<f64>), DatasetError> {
        let a = sample_initial(spec, i as u64);
        let mut coeffs = vec![0.0; m];
        coeffs[..a.len()].copy_from_slice(&a);
        let state = GalerkinState { t: 0.0, coeffs };
        let traj = solve_with_retries(&state, cfg, &tensor, basis, i)?;
        let input = encode_h(&state.coeffs, d_h).values;
        let mut output = encode_y(&traj, t_star, d_y)?.values;
        if output_noise > 0.0 {
            let mut rng =
                ChaCha8Rng::seed_from_u64(record_seed(spec.seed ^ 0xA5A5_A5A5_A5A5_A5A5, i as u64));
            for v in &mut output {
                *v += rng.random_range(-output_noise..=output_noise);
            }
        }
        Ok((input, output))
    };

    #[cfg(feature = "parallel")]
    let records: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(gen_one)
        .collect::<Result<_, _>>()?;
    #[cfg(not(feature = "parallel"))]
    let records: Vec<(Vec<f64>, Vec<f64>)> =
        (0..n).map(gen_one).collect::<Result<_, _>>()?;

    let mut inputs = Vec::with_capacity(n * d_h);
    let mut outputs = Vec::with_capacity(n * d_y);
    for (input, output) in records {
        inputs.extend_from_slice(&input);
        outputs.extend_from_slice(&output);
    }

    let manifest = DatasetManifest {
        version: FORMAT_VERSION,
        n,
        d_h,
        d_y,
        dim: spec.dim,
        m,
        t_star,
        solver: *cfg,
        sample: *spec,
        output_noise,
        checksum_inputs: format!("{:016x}", fnv1a64(&f64s_to_le_bytes(&inputs))),
        checksum_outputs: format!("{:016x}", fnv1a64(&f64s_to_le_bytes(&outputs))),
    };
    Ok(Dataset {
        manifest,
        inputs,
        outputs,
    })
}

/// 64-bit FNV-1a over a byte stream.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}

pub fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn le_bytes_to_f64s(bytes: &[u8]) -> Vec<f64> {
    bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect()
}

fn io_err(path: &Path, source: io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Write `manifest.json`, `inputs.f64`, `outputs.f64` into `dir`.
pub fn write(dataset: &Dataset, dir: &Path) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let manifest_path = dir.join("manifest.json");
    let mut manifest_text = serde_json::to_string_pretty(&dataset.manifest)?;
    manifest_text.push('\n');
    fs::write(&manifest_path, manifest_text).map_err(|e| io_err(&manifest_path, e))?;
    let inputs_path = dir.join("inputs.f64");
    fs::write(&inputs_path, f64s_to_le_bytes(&dataset.inputs))
        .map_err(|e| io_err(&inputs_path, e))?;
    let outputs_path = dir.join("outputs.f64");
    fs::write(&outputs_path, f64s_to_le_bytes(&dataset.outputs))
        .map_err(|e| io_err(&outputs_path, e))?;
    Ok(())
}

/// Read only the manifest, without touching the payload files.
pub fn read_manifest(dir: &Path) -> Result<DatasetManifest, DatasetError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.version != FORMAT_VERSION {
        return Err(DatasetError::VersionMismatch {
            got: manifest.version,
            expected: FORMAT_VERSION,
        });
    }
    Ok(manifest)
}

fn read_payload(
    dir: &Path,
    file: &str,
    rows: usize,
    cols: usize,
    checksum: &str,
) -> Result<Vec<f64>, DatasetError> {
    let path = dir.join(file);
    let bytes = fs::read(&path).map_err(|e| io_err(&path, e))?;
    let expected = rows * cols * 8;
    if bytes.len() != expected {
        return Err(DatasetError::PayloadSize {
            file: file.to_string(),
            expected,
            got: bytes.len(),
        });
    }
    if format!("{:016x}", fnv1a64(&bytes)) != checksum {
        return Err(DatasetError::ChecksumMismatch {
            file: file.to_string(),
        });
    }
    Ok(le_bytes_to_f64s(&bytes))
}

/// Read a full dataset back, verifying sizes and checksums.
pub fn read(dir: &Path) -> Result<Dataset, DatasetError> {
    let manifest = read_manifest(dir)?;
    let inputs = read_payload(
        dir,
        "inputs.f64",
        manifest.n,
        manifest.d_h,
        &manifest.checksum_inputs,
    )?;
    let outputs = read_payload(
        dir,
        "outputs.f64",
        manifest.n,
        manifest.d_y,
        &manifest.checksum_outputs,
    )?;
    Ok(Dataset {
        manifest,
        inputs,
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis;

    fn box_spec(seed: u64) -> SampleSpec {
        SampleSpec {
            dim: 2,
            radius: 1.5,
            active_modes: 4,
            distribution: Distribution::UniformBox,
            seed,
        }
    }

    #[test]
    fn samples_are_reproducible_and_bounded() {
        let spec = box_spec(42);
        for index in [0u64, 1, 17, 999] {
            let a = sample_initial(&spec, index);
            let b = sample_initial(&spec, index);
            assert_eq!(a, b);
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(norm <= spec.radius + 1e-12);
            let side = spec.radius / (spec.active_modes as f64).sqrt();
            assert!(a.iter().all(|v| v.abs() <= side + 1e-15));
        }
    }

    #[test]
    fn one_dimensional_box_spans_full_radius() {
        let spec = SampleSpec {
            active_modes: 1,
            ..box_spec(7)
        };
        let mut max_abs: f64 = 0.0;
        for index in 0..2000 {
            let a = sample_initial(&spec, index);
            assert_eq!(a.len(), 1);
            assert!(a[0].abs() <= spec.radius + 1e-12);
            max_abs = max_abs.max(a[0].abs());
        }
        assert!(max_abs > 0.95 * spec.radius, "draws should fill [-R, R]");
    }

    #[test]
    fn sphere_samples_sit_on_the_sphere() {
        let spec = SampleSpec {
            distribution: Distribution::UniformSphere,
            active_modes: 5,
            ..box_spec(11)
        };
        for index in 0..200 {
            let a = sample_initial(&spec, index);
            let norm = a.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - spec.radius).abs() < 1e-12);
        }
    }

    #[test]
    fn different_indices_give_different_draws() {
        let spec = box_spec(3);
        let a = sample_initial(&spec, 0);
        let b = sample_initial(&spec, 1);
        assert_ne!(a, b);
    }

    #[test]
    fn single_mode_dataset_matches_exact_decay() {
        let basis = build_basis(2, 6).unwrap();
        let spec = SampleSpec {
            dim: 2,
            radius: 1.0,
            active_modes: 1,
            distribution: Distribution::UniformBox,
            seed: 5,
        };
        let cfg = SolverConfig {
            nu: 0.3,
            dt: 1e-3,
            t_final: 0.5,
            snapshot_stride: 5,
            stability_guard: true,
        };
        let ds = generate(&spec, &cfg, &basis, 8, 3, 3, 0.5).unwrap();
        for i in 0..8 {
            let a = ds.input_row(i)[0];
            let got = ds.output_row(i)[0];
            let exact = a * (-cfg.nu * 1.0 * 0.5).exp();
            assert!(
                (got - exact).abs() <= 1e-8 * exact.abs().max(1.0),
                "record {i}: {got} vs {exact}"
            );
            assert!(ds.output_row(i)[1..].iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn empty_dataset_has_valid_manifest() {
        let basis = build_basis(2, 4).unwrap();
        let cfg = SolverConfig {
            nu: 0.1,
            dt: 1e-2,
            t_final: 0.1,
            snapshot_stride: 1,
            stability_guard: true,
        };
        let ds = generate(&box_spec(1), &cfg, &basis, 0, 4, 4, 0.1).unwrap();
        assert_eq!(ds.len(), 0);
        assert_eq!(ds.manifest.checksum_inputs, format!("{:016x}", fnv1a64(&[])));
    }

    #[test]
    fn fnv_vector_matches_reference_values() {
        // Published FNV-1a 64 test vectors.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }
}

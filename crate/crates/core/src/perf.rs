//! Max-of-subsystems runtime model for accelerator kernels.
//!
//! A kernel that moves `M` bytes, issues `O_VPU` vector ops and `O_MXU`
//! matrix ops on a device with memory bandwidth `beta`, vector throughput
//! `gamma` and matrix throughput `pi` is modelled as taking
//! `max(M / beta, O_VPU / gamma, O_MXU / pi)` seconds. Stalls between
//! subsystems are ignored.

use std::fmt;

use crate::error::{Error, Result};

/// Throughputs of one accelerator.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviceProfile {
    name: String,
    beta: f64,
    gamma: f64,
    pi: f64,
}

impl DeviceProfile {
    /// `beta` in bytes/s, `gamma` and `pi` in ops/s. All must be finite and
    /// positive.
    pub fn new(name: impl Into<String>, beta: f64, gamma: f64, pi: f64) -> Result<Self> {
        let name = name.into();
        if name.is_empty() || name.chars().any(|c| c.is_whitespace() || c == '=') {
            return Err(Error::InvalidParams(format!("bad profile name {name:?}")));
        }
        for (label, v) in [("beta", beta), ("gamma", gamma), ("pi", pi)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParams(format!(
                    "{name}: {label} must be positive, got {v}"
                )));
            }
        }
        Ok(DeviceProfile {
            name,
            beta,
            gamma,
            pi,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn pi(&self) -> f64 {
        self.pi
    }
}

// The TPUv5e vector throughput is an estimate obtained by timing
// vector-bound kernels, not a published figure.
const BUILTIN: [(&str, f64, f64, f64); 4] = [
    ("a100_pcie", 1.935e12, 19.5e12, 312e12),
    ("h100_sxm", 3.35e12, 67e12, 1979e12),
    ("tpuv4", 1.2e12, 4.3e12, 275e12),
    ("tpuv5e", 819e9, 6.14e12, 197e12),
];

/// The built-in profiles: `a100_pcie`, `h100_sxm`, `tpuv4`, `tpuv5e`.
pub fn builtin_profiles() -> Vec<DeviceProfile> {
    BUILTIN
        .iter()
        .map(|&(name, beta, gamma, pi)| DeviceProfile {
            name: name.to_string(),
            beta,
            gamma,
            pi,
        })
        .collect()
}

pub fn builtin_profile(name: &str) -> Option<DeviceProfile> {
    builtin_profiles().into_iter().find(|p| p.name == name)
}

/// Resources consumed by one kernel invocation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KernelFootprint {
    mem_bytes: f64,
    vpu_ops: f64,
    mxu_ops: f64,
}

impl KernelFootprint {
    pub fn new(mem_bytes: f64, vpu_ops: f64, mxu_ops: f64) -> Result<Self> {
        let fields = [mem_bytes, vpu_ops, mxu_ops];
        if fields.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidParams(format!(
                "footprint fields must be finite and non-negative: {fields:?}"
            )));
        }
        if fields.iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidParams("footprint is all zero".into()));
        }
        Ok(KernelFootprint {
            mem_bytes,
            vpu_ops,
            mxu_ops,
        })
    }

    pub fn mem_bytes(&self) -> f64 {
        self.mem_bytes
    }

    pub fn vpu_ops(&self) -> f64 {
        self.vpu_ops
    }

    pub fn mxu_ops(&self) -> f64 {
        self.mxu_ops
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.mem_bytes * c, self.vpu_ops * c, self.mxu_ops * c)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Subsystem {
    Memory,
    Vector,
    Matrix,
}

impl Subsystem {
    pub fn as_str(&self) -> &'static str {
        match self {
            Subsystem::Memory => "memory",
            Subsystem::Vector => "vector",
            Subsystem::Matrix => "matrix",
        }
    }
}

impl fmt::Display for Subsystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RuntimeEstimate {
    pub seconds: f64,
    /// Every subsystem whose time equals `seconds`, in
    /// memory/vector/matrix order.
    pub bottlenecks: Vec<Subsystem>,
    pub memory_seconds: f64,
    pub vector_seconds: f64,
    pub matrix_seconds: f64,
}

impl RuntimeEstimate {
    /// Bottleneck names joined with `+`, e.g. `memory+vector`.
    pub fn label(&self) -> String {
        self.bottlenecks
            .iter()
            .map(Subsystem::as_str)
            .collect::<Vec<_>>()
            .join("+")
    }
}

/// Runtime in seconds and the subsystems that attain it.
///
/// Terms are compared with a relative tolerance of 1e-12 so that a
/// footprint sitting exactly on a ridge reports every tied subsystem.
pub fn estimate_runtime(fp: &KernelFootprint, dev: &DeviceProfile) -> RuntimeEstimate {
    let terms = [
        (Subsystem::Memory, fp.mem_bytes / dev.beta),
        (Subsystem::Vector, fp.vpu_ops / dev.gamma),
        (Subsystem::Matrix, fp.mxu_ops / dev.pi),
    ];
    let seconds = terms.iter().map(|t| t.1).fold(0.0, f64::max);
    let bottlenecks = terms
        .iter()
        .filter(|t| t.1 >= seconds * (1.0 - 1e-12))
        .map(|t| t.0)
        .collect();
    RuntimeEstimate {
        seconds,
        bottlenecks,
        memory_seconds: terms[0].1,
        vector_seconds: terms[1].1,
        matrix_seconds: terms[2].1,
    }
}

/// Vector ops that fit in the time of one `d`-dimensional dot product on the
/// matrix unit: `gamma / (pi / 2d)`.
pub fn ridge_vector_ops_per_dot(dev: &DeviceProfile, d: u64) -> f64 {
    dev.gamma / (dev.pi / (2.0 * d as f64))
}

/// Vector ops that fit in the time of moving 4 bytes: `gamma / (beta / 4)`.
pub fn ridge_vector_ops_per_4bytes(dev: &DeviceProfile) -> f64 {
    dev.gamma / (dev.beta / 4.0)
}

/// Vector ops per input element of the stage-1 update.
pub fn stage1_ops_per_element(local_k: u64) -> u64 {
    5 * local_k - 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Regime {
    MemoryBound,
    VectorBound,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::MemoryBound => "memory-bound",
            Regime::VectorBound => "vector-bound",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stage1Boundedness {
    pub regime: Regime,
    pub ops_per_element: u64,
    pub ridge: f64,
    /// Largest `K'` that is still memory-bound.
    pub crossover_local_k: u64,
}

/// Whether a standalone stage 1 reading 4-byte scores is memory- or
/// vector-bound at `local_k`.
pub fn stage1_boundedness(local_k: u64, dev: &DeviceProfile) -> Result<Stage1Boundedness> {
    if local_k == 0 {
        return Err(Error::InvalidParams("local_k must be positive".into()));
    }
    let ridge = ridge_vector_ops_per_4bytes(dev);
    let ops = stage1_ops_per_element(local_k);
    let regime = if ops as f64 <= ridge {
        Regime::MemoryBound
    } else {
        Regime::VectorBound
    };
    Ok(Stage1Boundedness {
        regime,
        ops_per_element: ops,
        ridge,
        crossover_local_k: ((ridge + 2.0) / 5.0).floor() as u64,
    })
}

/// Standalone stage 1 over `batch` rows of `n` 4-byte scores: every score is
/// read once and costs `5K' - 2` vector ops. Candidate writes are ignored.
pub fn stage1_footprint(batch: u64, n: u64, local_k: u64) -> Result<KernelFootprint> {
    if local_k == 0 {
        return Err(Error::InvalidParams("local_k must be positive".into()));
    }
    let elems = batch as f64 * n as f64;
    KernelFootprint::new(4.0 * elems, stage1_ops_per_element(local_k) as f64 * elems, 0.0)
}

/// Score matmul of `b` queries against `n` database rows of dimension `d`,
/// writing the full `[b, n]` output.
pub fn matmul_footprint(b: u64, d: u64, n: u64, bytes_per_elem: u64) -> Result<KernelFootprint> {
    let (b, d, n, e) = (b as f64, d as f64, n as f64, bytes_per_elem as f64);
    KernelFootprint::new(e * (b * d + d * n + b * n), 0.0, 2.0 * b * d * n)
}

/// Score matmul with stage 1 fused in: the `[b, n]` output is never written
/// and the `5K' - 2` update ops per score run on the vector unit alongside
/// the matrix unit.
pub fn fused_mips_footprint(
    b: u64,
    d: u64,
    n: u64,
    bytes_per_elem: u64,
    local_k: u64,
) -> Result<KernelFootprint> {
    if local_k == 0 {
        return Err(Error::InvalidParams("local_k must be positive".into()));
    }
    let (bf, df, nf, e) = (b as f64, d as f64, n as f64, bytes_per_elem as f64);
    KernelFootprint::new(
        e * (bf * df + df * nf),
        stage1_ops_per_element(local_k) as f64 * bf * nf,
        2.0 * bf * df * nf,
    )
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MipsIntensity {
    /// Flops per byte.
    pub intensity: f64,
    /// `(2 / E) * min(B, D)`, an upper bound on the unfused intensity.
    pub bound: f64,
}

/// Arithmetic intensity `2BDN / (E(BD + DN + BN))` of the score matmul;
/// with `fused` the `BN` output term is dropped.
pub fn mips_arithmetic_intensity(
    b: u64,
    d: u64,
    n: u64,
    bytes_per_elem: u64,
    fused: bool,
) -> Result<MipsIntensity> {
    if b == 0 || d == 0 || n == 0 || bytes_per_elem == 0 {
        return Err(Error::InvalidParams(
            "b, d, n and bytes_per_elem must be positive".into(),
        ));
    }
    let (bf, df, nf, e) = (b as f64, d as f64, n as f64, bytes_per_elem as f64);
    let out = if fused { 0.0 } else { bf * nf };
    Ok(MipsIntensity {
        intensity: 2.0 * bf * df * nf / (e * (bf * df + df * nf + out)),
        bound: 2.0 / e * bf.min(df),
    })
}

/// Renders profiles as `key = value` text, one blank-line separated block
/// per profile:
///
/// ```text
/// name = tpuv5e
/// beta = 819000000000
/// gamma = 6140000000000
/// pi = 197000000000000
/// ```
pub fn format_profiles(profiles: &[DeviceProfile]) -> String {
    profiles
        .iter()
        .map(|p| {
            format!(
                "name = {}\nbeta = {}\ngamma = {}\npi = {}\n",
                p.name, p.beta, p.gamma, p.pi
            )
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Parses the format written by [`format_profiles`]. Lines starting with
/// `#` are comments; each `name` key starts a new profile.
pub fn parse_profiles(text: &str) -> Result<Vec<DeviceProfile>> {
    #[derive(Default)]
    struct Partial {
        name: String,
        beta: Option<f64>,
        gamma: Option<f64>,
        pi: Option<f64>,
    }
    fn finish(p: Partial) -> Result<DeviceProfile> {
        let missing = |k: &str| Error::InvalidParams(format!("profile {}: missing {k}", p.name));
        DeviceProfile::new(
            p.name.clone(),
            p.beta.ok_or_else(|| missing("beta"))?,
            p.gamma.ok_or_else(|| missing("gamma"))?,
            p.pi.ok_or_else(|| missing("pi"))?,
        )
    }

    let mut out = Vec::new();
    let mut cur: Option<Partial> = None;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: &str| Error::InvalidParams(format!("line {}: {msg}", lineno + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        if key == "name" {
            if let Some(p) = cur.take() {
                out.push(finish(p)?);
            }
            cur = Some(Partial {
                name: value.to_string(),
                ..Partial::default()
            });
            continue;
        }
        let p = cur.as_mut().ok_or_else(|| bad("value before any name"))?;
        let v: f64 = value
            .parse()
            .map_err(|_| bad(&format!("{value:?} is not a number")))?;
        let slot = match key {
            "beta" => &mut p.beta,
            "gamma" => &mut p.gamma,
            "pi" => &mut p.pi,
            _ => return Err(bad(&format!("unknown key {key:?}"))),
        };
        if slot.replace(v).is_some() {
            return Err(bad(&format!("duplicate key {key:?}")));
        }
    }
    if let Some(p) = cur {
        out.push(finish(p)?);
    }
    Ok(out)
}

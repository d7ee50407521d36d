//! Degradation synthesis: AWGN and the signal-dependent sensor noise model.
//!
//! The sensor model combines photon shot noise, which grows as the signal
//! shrinks, with gain-dependent and additive read-noise terms:
//!
//! ```text
//! M(s) = sqrt( (ag*dg) / (nsat*s)  +  dg^2 * (ag*ct1n + ct2n)^2 )
//! noisy = clip( s + N(0,1) * M(s) )
//! ```
//!
//! Signals are normalized to [0, 1]; AWGN sigma is specified in 8-bit units
//! and divided by 255 at application time.

use rand::Rng;

use crate::error::{Error, Result};
use crate::frame::{clip01, Frame};
use crate::rng::normal_at;

/// Normalized gain-dependent read-noise coefficient of the reference sensor.
pub const DEFAULT_CT1N: f64 = 1.25e-4;
/// Normalized additive read-noise coefficient.
pub const DEFAULT_CT2N: f64 = 1.11e-4;
/// Saturation electron count.
pub const DEFAULT_NSAT: f64 = 7489.0;

/// Signal floor used inside M(s); one 8-bit step. The shot-noise term
/// diverges at s = 0, so the signal fed into the model (not the stored
/// pixel) is clamped to this black level.
pub const S_MIN: f64 = 1.0 / 255.0;

pub const AG_MAX: f64 = 64.0;
pub const DG_MAX: f64 = 32.0;
pub const SIGMA_MAX: f64 = 55.0;

/// Parameters of the signal-dependent sensor model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SensorNoiseParams {
    /// Analog gain, [0, 64].
    pub ag: f64,
    /// Digital gain, [0, 32].
    pub dg: f64,
    pub ct1n: f64,
    pub ct2n: f64,
    pub nsat: f64,
}

impl SensorNoiseParams {
    /// Gains with the reference sensor constants.
    pub fn new(ag: f64, dg: f64) -> Result<Self> {
        Self::with_constants(ag, dg, DEFAULT_CT1N, DEFAULT_CT2N, DEFAULT_NSAT)
    }

    pub fn with_constants(ag: f64, dg: f64, ct1n: f64, ct2n: f64, nsat: f64) -> Result<Self> {
        let p = Self {
            ag,
            dg,
            ct1n,
            ct2n,
            nsat,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("ag", self.ag),
            ("dg", self.dg),
            ("ct1n", self.ct1n),
            ("ct2n", self.ct2n),
            ("nsat", self.nsat),
        ] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("sensor param {name} = {v}")));
            }
        }
        if !(0.0..=AG_MAX).contains(&self.ag) {
            return Err(Error::InvalidParam(format!(
                "ag {} outside [0, {AG_MAX}]",
                self.ag
            )));
        }
        if !(0.0..=DG_MAX).contains(&self.dg) {
            return Err(Error::InvalidParam(format!(
                "dg {} outside [0, {DG_MAX}]",
                self.dg
            )));
        }
        if self.ct1n <= 0.0 || self.ct2n <= 0.0 || self.nsat <= 0.0 {
            return Err(Error::InvalidParam(
                "ct1n, ct2n and nsat must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// AWGN with sigma in 8-bit pixel units, [0, 55].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AwgnParams {
    pub sigma: f64,
}

impl AwgnParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::InvalidParam(format!("sigma {sigma} must be >= 0")));
        }
        Ok(Self { sigma })
    }
}

/// One of the two degradation families.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseKind {
    Awgn(AwgnParams),
    Sensor(SensorNoiseParams),
}

/// A fully reproducible degradation: family, parameters and realization seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn awgn(sigma: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            kind: NoiseKind::Awgn(AwgnParams::new(sigma)?),
            seed,
        })
    }

    pub fn sensor(ag: f64, dg: f64, seed: u64) -> Result<Self> {
        Ok(Self {
            kind: NoiseKind::Sensor(SensorNoiseParams::new(ag, dg)?),
            seed,
        })
    }

    /// Compact textual form of the family and parameters (seed excluded);
    /// used in dataset manifests.
    pub fn encode_kind(&self) -> String {
        match self.kind {
            NoiseKind::Awgn(p) => format!("awgn:sigma={}", p.sigma),
            NoiseKind::Sensor(p) => format!(
                "sensor:ag={},dg={},ct1n={},ct2n={},nsat={}",
                p.ag, p.dg, p.ct1n, p.ct2n, p.nsat
            ),
        }
    }

    pub fn decode_kind(text: &str, seed: u64) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidParam(format!("noise spec '{text}': {msg}"));
        let (family, body) = text
            .split_once(':')
            .ok_or_else(|| bad("missing ':' separator"))?;
        let mut fields = std::collections::HashMap::new();
        for part in body.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| bad("field missing '='"))?;
            let v: f64 = v.parse().map_err(|_| bad("unparseable value"))?;
            fields.insert(k.to_string(), v);
        }
        let take = |fields: &std::collections::HashMap<String, f64>, k: &str| {
            fields
                .get(k)
                .copied()
                .ok_or_else(|| bad(&format!("missing field {k}")))
        };
        let kind = match family {
            "awgn" => NoiseKind::Awgn(AwgnParams::new(take(&fields, "sigma")?)?),
            "sensor" => NoiseKind::Sensor(SensorNoiseParams::with_constants(
                take(&fields, "ag")?,
                take(&fields, "dg")?,
                take(&fields, "ct1n")?,
                take(&fields, "ct2n")?,
                take(&fields, "nsat")?,
            )?),
            other => return Err(bad(&format!("unknown family '{other}'"))),
        };
        Ok(Self { kind, seed })
    }
}

/// Noise standard deviation M(s) for a normalized signal level s.
///
/// Strictly decreasing in s, strictly increasing in either gain (while the
/// gain is positive). Rejects s below [`S_MIN`], where the shot-noise term
/// blows up.
pub fn noise_scale(s: f64, params: &SensorNoiseParams) -> Result<f64> {
    params.validate()?;
    if !s.is_finite() {
        return Err(Error::NonFinite(format!("signal s = {s}")));
    }
    if s < S_MIN {
        return Err(Error::InvalidParam(format!(
            "signal {s} below floor {S_MIN}"
        )));
    }
    let shot = (params.ag * params.dg) / (params.nsat * s);
    let read = params.dg * params.dg * {
        let t = params.ag * params.ct1n + params.ct2n;
        t * t
    };
    Ok((shot + read).sqrt())
}

#[inline]
fn scale_clamped(s: f64, params: &SensorNoiseParams) -> f64 {
    let s = s.max(S_MIN);
    let shot = (params.ag * params.dg) / (params.nsat * s);
    let t = params.ag * params.ct1n + params.ct2n;
    (shot + params.dg * params.dg * t * t).sqrt()
}

/// Pre-clip noisy values for the sensor model, one per frame element. The
/// signal inside M(s) is clamped to [`S_MIN`]; the pixel itself is not.
pub fn sensor_noise_preclip(frame: &Frame, params: &SensorNoiseParams, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let out = frame
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let s = v as f64;
            s + normal_at(seed, i as u64) * scale_clamped(s, params)
        })
        .collect();
    Ok(out)
}

/// Degrades a frame with the sensor model; output clipped to [0, 1].
/// Deterministic for a given seed, independent of evaluation order.
pub fn apply_sensor_noise(frame: &Frame, params: &SensorNoiseParams, seed: u64) -> Result<Frame> {
    let raw = sensor_noise_preclip(frame, params, seed)?;
    Frame::new(
        frame.height(),
        frame.width(),
        raw.into_iter().map(|v| clip01(v) as f32).collect(),
    )
}

/// Pre-clip noisy values for AWGN with sigma in 8-bit units.
pub fn awgn_preclip(frame: &Frame, params: &AwgnParams, seed: u64) -> Result<Vec<f64>> {
    if !params.sigma.is_finite() || params.sigma < 0.0 {
        return Err(Error::InvalidParam(format!("sigma {}", params.sigma)));
    }
    let sigma = params.sigma / 255.0;
    let out = frame
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| v as f64 + normal_at(seed, i as u64) * sigma)
        .collect();
    Ok(out)
}

/// Degrades a frame with AWGN; output clipped to [0, 1].
pub fn apply_awgn(frame: &Frame, params: &AwgnParams, seed: u64) -> Result<Frame> {
    let raw = awgn_preclip(frame, params, seed)?;
    Frame::new(
        frame.height(),
        frame.width(),
        raw.into_iter().map(|v| clip01(v) as f32).collect(),
    )
}

/// Applies whichever degradation the spec describes.
pub fn degrade(frame: &Frame, spec: &NoiseSpec) -> Result<Frame> {
    match spec.kind {
        NoiseKind::Awgn(p) => apply_awgn(frame, &p, spec.seed),
        NoiseKind::Sensor(p) => apply_sensor_noise(frame, &p, spec.seed),
    }
}

/// Blind-training mix: probability of the AWGN family and uniform parameter
/// ranges for each family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseMix {
    pub p_awgn: f64,
    pub sigma_range: (f64, f64),
    pub ag_range: (f64, f64),
    pub dg_range: (f64, f64),
}

impl Default for NoiseMix {
    fn default() -> Self {
        Self {
            p_awgn: 0.5,
            sigma_range: (0.0, SIGMA_MAX),
            ag_range: (0.0, AG_MAX),
            dg_range: (0.0, DG_MAX),
        }
    }
}

impl NoiseMix {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_awgn) {
            return Err(Error::InvalidParam(format!(
                "p_awgn {} outside [0, 1]",
                self.p_awgn
            )));
        }
        for (name, (lo, hi)) in [
            ("sigma", self.sigma_range),
            ("ag", self.ag_range),
            ("dg", self.dg_range),
        ] {
            if !(lo.is_finite() && hi.is_finite()) || lo > hi || lo < 0.0 {
                return Err(Error::InvalidParam(format!(
                    "{name} range [{lo}, {hi}] is empty or invalid"
                )));
            }
        }
        Ok(())
    }
}

/// Draws a degradation spec from the mix: the family by a Bernoulli draw, its
/// parameters uniformly from the configured ranges, and a fresh realization
/// seed from the same stream.
pub fn sample_noise_spec<R: Rng + ?Sized>(rng: &mut R, mix: &NoiseMix) -> Result<NoiseSpec> {
    mix.validate()?;
    let uniform = |rng: &mut R, (lo, hi): (f64, f64)| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    };
    let awgn = rng.random_bool(mix.p_awgn);
    let kind = if awgn {
        NoiseKind::Awgn(AwgnParams::new(uniform(rng, mix.sigma_range))?)
    } else {
        NoiseKind::Sensor(SensorNoiseParams::new(
            uniform(rng, mix.ag_range),
            uniform(rng, mix.dg_range),
        )?)
    };
    Ok(NoiseSpec {
        kind,
        seed: rng.random(),
    })
}

//! Closed-form three-point-bending models of a homogenized beam: classical
//! and strain-gradient Euler-Bernoulli and Timoshenko, plus normalized
//! rigidities and the least-squares fit of the intrinsic length `g`.
//!
//! Section properties are those of the outer box, `A = b h`, `I = b h^3 / 12`.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("invalid beam spec: {0}")]
    InvalidSpec(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("line {line}: {message}")]
    Csv { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Homogenized beam under three-point bending.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamSpec {
    /// Effective Young's modulus E* (MPa).
    pub effective_e: f64,
    /// Effective shear modulus G* (MPa).
    pub effective_g: f64,
    /// Span between supports (mm).
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl BeamSpec {
    pub fn new(effective_e: f64, effective_g: f64, length: f64, width: f64, height: f64) -> Result<Self, BeamError> {
        let s = Self { effective_e, effective_g, length, width, height };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), BeamError> {
        for (name, v) in [
            ("effective_e", self.effective_e),
            ("effective_g", self.effective_g),
            ("length", self.length),
            ("width", self.width),
            ("height", self.height),
        ] {
            if !(v > 0.0) || v.is_nan() {
                return Err(BeamError::InvalidSpec(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn cross_section_area(&self) -> f64 {
        self.width * self.height
    }

    pub fn moment_of_inertia(&self) -> f64 {
        self.width * self.height.powi(3) / 12.0
    }

    pub fn with_height(&self, height: f64) -> Self {
        Self { height, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientBeamSpec {
    pub base: BeamSpec,
    /// Intrinsic length (mm).
    pub g: f64,
}

impl GradientBeamSpec {
    pub fn new(base: BeamSpec, g: f64) -> Result<Self, BeamError> {
        base.validate()?;
        if !(g >= 0.0) || !g.is_finite() {
            return Err(BeamError::InvalidSpec(format!("g must be finite and >= 0, got {g}")));
        }
        Ok(Self { base, g })
    }

    /// `1 + 12 (g / h)^2`
    pub fn gradient_factor(&self) -> f64 {
        let r = self.g / self.base.height;
        1.0 + 12.0 * r * r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamModel {
    EulerBernoulli,
    Timoshenko,
}

impl BeamModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            BeamModel::EulerBernoulli => "eb",
            BeamModel::Timoshenko => "timoshenko",
        }
    }
}

impl fmt::Display for BeamModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BeamModel {
    type Err = BeamError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "eb" | "euler-bernoulli" => Ok(BeamModel::EulerBernoulli),
            "t" | "timoshenko" => Ok(BeamModel::Timoshenko),
            other => Err(BeamError::InvalidSpec(format!("unknown beam model '{other}'"))),
        }
    }
}

/// `F L^3 / (48 E* I)`
pub fn deflection_eb(spec: &BeamSpec, force: f64) -> f64 {
    force * spec.length.powi(3) / (48.0 * (spec.effective_e * spec.moment_of_inertia()))
}

/// `F L^3 / (48 E* I) + F L / (4 G* A)`
pub fn deflection_timoshenko(spec: &BeamSpec, force: f64) -> f64 {
    deflection_eb(spec, force) + force * spec.length / (4.0 * spec.effective_g * spec.cross_section_area())
}

/// `4 E* b h^3 / L^3`
pub fn rigidity_eb(spec: &BeamSpec) -> f64 {
    4.0 * spec.effective_e * spec.width * spec.height.powi(3) / spec.length.powi(3)
}

/// Shear correction `(E*/G*) (h/L)^2`.
fn shear_ratio(spec: &BeamSpec) -> f64 {
    let r = spec.height / spec.length;
    spec.effective_e / spec.effective_g * r * r
}

/// `D_EB / (1 + (E*/G*) (h/L)^2)`
pub fn rigidity_timoshenko(spec: &BeamSpec) -> f64 {
    rigidity_eb(spec) / (1.0 + shear_ratio(spec))
}

/// `F L^3 / (48 (E* I + E* A g^2))`
pub fn deflection_gradient_eb(spec: &GradientBeamSpec, force: f64) -> f64 {
    let b = &spec.base;
    force * b.length.powi(3)
        / (48.0 * (b.effective_e * b.moment_of_inertia() + b.effective_e * b.cross_section_area() * spec.g * spec.g))
}

/// Deflection consistent with [`rigidity_gradient`] for the Timoshenko model,
/// `w_T / (1 + 12 (g/h)^2)`.
///
/// Integrating the gradient Timoshenko equations gives the bending term with
/// `E* I + E* A g^2` plus the unchanged shear term `F L / (4 G* A)`; its
/// reciprocal differs from the stiffened rigidity by a relative
/// `c k / (1 + k)` with `c` the shear ratio and `k = 12 (g/h)^2`. This
/// function keeps deflection and rigidity exact reciprocals; see
/// [`deflection_gradient_timoshenko_split`] for the two-term form.
pub fn deflection_gradient_timoshenko(spec: &GradientBeamSpec, force: f64) -> f64 {
    deflection_timoshenko(&spec.base, force) / spec.gradient_factor()
}

/// Two-term form `F L^3 / (48 (E* I + E* A g^2)) + F L / (4 G* A)`.
pub fn deflection_gradient_timoshenko_split(spec: &GradientBeamSpec, force: f64) -> f64 {
    let b = &spec.base;
    deflection_gradient_eb(spec, force) + force * b.length / (4.0 * b.effective_g * b.cross_section_area())
}

/// Classical rigidity of `model`.
pub fn rigidity_classical(spec: &BeamSpec, model: BeamModel) -> f64 {
    match model {
        BeamModel::EulerBernoulli => rigidity_eb(spec),
        BeamModel::Timoshenko => rigidity_timoshenko(spec),
    }
}

/// `D_model (1 + 12 (g/h)^2)`
pub fn rigidity_gradient(spec: &GradientBeamSpec, model: BeamModel) -> f64 {
    rigidity_classical(&spec.base, model) * spec.gradient_factor()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleSource {
    Experimental,
    FcmCt,
    FcmCad,
}

impl SampleSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SampleSource::Experimental => "experimental",
            SampleSource::FcmCt => "fcm-ct",
            SampleSource::FcmCad => "fcm-cad",
        }
    }
}

impl fmt::Display for SampleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SampleSource {
    type Err = BeamError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "experimental" => Ok(SampleSource::Experimental),
            "fcm-ct" => Ok(SampleSource::FcmCt),
            "fcm-cad" => Ok(SampleSource::FcmCad),
            other => Err(BeamError::InvalidSample(format!("unknown source '{other}'"))),
        }
    }
}

/// Measured or simulated rigidity of one beam.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigiditySample {
    /// mm
    pub height: f64,
    /// N/mm
    pub rigidity: f64,
    pub source: SampleSource,
}

impl RigiditySample {
    pub fn new(height: f64, rigidity: f64, source: SampleSource) -> Result<Self, BeamError> {
        if !(height > 0.0 && height.is_finite() && rigidity > 0.0 && rigidity.is_finite()) {
            return Err(BeamError::InvalidSample(format!(
                "height and rigidity must be positive, got {height} and {rigidity}"
            )));
        }
        Ok(Self { height, rigidity, source })
    }
}

/// `D / D_EB` with the reference spec evaluated at the sample height.
pub fn normalized_rigidity(sample: &RigiditySample, reference: &BeamSpec) -> f64 {
    sample.rigidity / rigidity_eb(&reference.with_height(sample.height))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GFit {
    /// mm
    pub g: f64,
    /// Root-mean-square misfit of `D_i / D_classical,i`.
    pub rms_residual: f64,
    pub model: BeamModel,
    /// The unconstrained optimum was negative and has been clamped to 0.
    pub clamped: bool,
}

/// Least-squares fit of `g` to `D_i / D_classical,i - 1 = 12 g^2 / h_i^2`.
///
/// The problem is linear in `s = g^2` and is solved in closed form on the
/// normalized rigidities, then clamped at `s = 0`.
pub fn fit_g(samples: &[RigiditySample], reference: &BeamSpec, model: BeamModel) -> Result<GFit, BeamError> {
    if samples.is_empty() {
        return Err(BeamError::InvalidSample("fit_g needs at least one sample".into()));
    }
    reference.validate()?;
    let pairs: Vec<(f64, f64)> = samples
        .iter()
        .map(|s| {
            let ratio = s.rigidity / rigidity_classical(&reference.with_height(s.height), model);
            (12.0 / (s.height * s.height), ratio)
        })
        .collect();
    let sxx: f64 = pairs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = pairs.iter().map(|(x, r)| x * (r - 1.0)).sum();
    let mut s = sxy / sxx;
    let clamped = s < 0.0;
    if clamped {
        log::warn!("all samples are softer than the classical {model} prediction; g clamped to 0");
        s = 0.0;
    }
    let sq: f64 = pairs.iter().map(|(x, r)| (1.0 + x * s - r).powi(2)).sum();
    Ok(GFit { g: s.sqrt(), rms_residual: (sq / pairs.len() as f64).sqrt(), model, clamped })
}

/// Format a value with 12 significant digits in scientific notation.
pub fn fmt12(v: f64) -> String {
    format!("{v:.11e}")
}

pub const SAMPLE_CSV_HEADER: &str = "height_mm,rigidity_N_per_mm,source";

pub fn write_samples_csv(samples: &[RigiditySample], mut w: impl Write) -> Result<(), BeamError> {
    writeln!(w, "{SAMPLE_CSV_HEADER}")?;
    for s in samples {
        writeln!(w, "{},{},{}", fmt12(s.height), fmt12(s.rigidity), s.source)?;
    }
    Ok(())
}

pub fn read_samples_csv(r: impl BufRead) -> Result<Vec<RigiditySample>, BeamError> {
    let mut out = Vec::new();
    let mut lines = r.lines().enumerate();
    let header = match lines.next() {
        Some((_, line)) => line?,
        None => String::new(),
    };
    if header.trim() != SAMPLE_CSV_HEADER {
        return Err(BeamError::Csv { line: 1, message: format!("expected header '{SAMPLE_CSV_HEADER}'") });
    }
    for (i, line) in lines {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| BeamError::Csv { line: i + 1, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        }
        let h: f64 = fields[0].parse().map_err(|_| err(format!("bad height '{}'", fields[0])))?;
        let d: f64 = fields[1].parse().map_err(|_| err(format!("bad rigidity '{}'", fields[1])))?;
        let src: SampleSource = fields[2].parse().map_err(|e: BeamError| err(e.to_string()))?;
        out.push(RigiditySample::new(h, d, src).map_err(|e| err(e.to_string()))?);
    }
    Ok(out)
}

/// Flat `key=value` report of a fit.
pub fn format_fit_report(fit: &GFit) -> String {
    format!(
        "model={}\ng_mm={}\nrms_residual={}\nclamped={}\n",
        fit.model,
        fmt12(fit.g),
        fmt12(fit.rms_residual),
        fit.clamped
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn full_size_beam() -> BeamSpec {
        BeamSpec::new(12533.0, 5651.0, 120.0, 8.0, 16.0).unwrap()
    }

    #[test]
    fn eb_deflection_reference_value() {
        // I = 8 * 16^3 / 12 = 8192 / 3; w = 100 * 120^3 / (48 * 12533 * 8192 / 3)
        let want = 100.0 * 1_728_000.0 / (48.0 * 12533.0 * 8192.0 / 3.0);
        assert!((deflection_eb(&full_size_beam(), 100.0) - want).abs() < 1e-15);
        assert!((want - 0.10519).abs() < 5e-6);
        assert_eq!(deflection_eb(&full_size_beam(), 0.0), 0.0);
        let long = BeamSpec { length: 240.0, ..full_size_beam() };
        assert!((deflection_eb(&long, 100.0) / deflection_eb(&full_size_beam(), 100.0) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn timoshenko_deflection_reference_value() {
        let shear: f64 = 100.0 * 120.0 / (4.0 * 5651.0 * 128.0);
        assert!((shear - 0.004149).abs() < 2e-6);
        let w = deflection_timoshenko(&full_size_beam(), 100.0);
        assert!((w - (deflection_eb(&full_size_beam(), 100.0) + shear)).abs() < 1e-15);
        assert!((w - 0.10934).abs() < 5e-5);
    }

    #[test]
    fn eb_rigidity_reference_value() {
        let d = rigidity_eb(&full_size_beam());
        assert!((d - 4.0 * 12533.0 * 8.0 * 4096.0 / 1_728_000.0).abs() < 1e-10);
        assert!((d - 950.7).abs() < 0.05);
        let half = full_size_beam().with_height(8.0);
        assert!((d / rigidity_eb(&half) - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gradient_identities() {
        let base = full_size_beam().with_height(4.0);
        let twice = GradientBeamSpec::new(base, 4.0 / 12f64.sqrt()).unwrap();
        assert!((rigidity_gradient(&twice, BeamModel::EulerBernoulli) / rigidity_eb(&base) - 2.0).abs() < 1e-14);
        let g = GradientBeamSpec::new(base, 0.387).unwrap();
        let ratio = deflection_eb(&base, 10.0) / deflection_gradient_eb(&g, 10.0);
        assert!((ratio - (1.0 + 12.0 * (0.387f64 / 4.0).powi(2))).abs() < 1e-14);
        // The two-term Timoshenko form agrees with the stiffened rigidity up to
        // the cross term between shear and gradient corrections.
        let a = deflection_gradient_timoshenko(&g, 10.0);
        let b = deflection_gradient_timoshenko_split(&g, 10.0);
        assert!((a - b).abs() / b < 1e-3);
    }

    #[test]
    fn fit_recovers_planted_g() {
        let reference = BeamSpec::new(7356.0, 2742.0, 120.0, 8.0, 4.0).unwrap();
        for model in [BeamModel::EulerBernoulli, BeamModel::Timoshenko] {
            let samples: Vec<RigiditySample> = [4.0, 8.0, 12.0, 16.0]
                .iter()
                .map(|&h| {
                    let spec = GradientBeamSpec::new(reference.with_height(h), 0.387).unwrap();
                    RigiditySample::new(h, rigidity_gradient(&spec, model), SampleSource::FcmCad).unwrap()
                })
                .collect();
            let fit = fit_g(&samples, &reference, model).unwrap();
            assert!((fit.g / 0.387 - 1.0).abs() < 1e-10);
            assert!(fit.rms_residual < 1e-12);
        }
    }

    #[test]
    fn classical_samples_give_zero_and_softer_samples_clamp() {
        let reference = BeamSpec::new(7356.0, 2742.0, 120.0, 8.0, 4.0).unwrap();
        let exact: Vec<RigiditySample> = [4.0, 8.0]
            .iter()
            .map(|&h| RigiditySample::new(h, rigidity_eb(&reference.with_height(h)), SampleSource::FcmCad).unwrap())
            .collect();
        let fit = fit_g(&exact, &reference, BeamModel::EulerBernoulli).unwrap();
        assert_eq!(fit.g, 0.0);
        assert!(!fit.clamped);
        let soft: Vec<RigiditySample> =
            exact.iter().map(|s| RigiditySample { rigidity: 0.9 * s.rigidity, ..*s }).collect();
        let fit = fit_g(&soft, &reference, BeamModel::EulerBernoulli).unwrap();
        assert_eq!(fit.g, 0.0);
        assert!(fit.clamped);
        assert!(fit_g(&[], &reference, BeamModel::EulerBernoulli).is_err());
    }

    #[test]
    fn single_sample_is_interpolated() {
        let reference = BeamSpec::new(7356.0, 2742.0, 120.0, 8.0, 4.0).unwrap();
        let s = RigiditySample::new(8.0, 1.3 * rigidity_eb(&reference.with_height(8.0)), SampleSource::Experimental)
            .unwrap();
        let fit = fit_g(&[s], &reference, BeamModel::EulerBernoulli).unwrap();
        assert!(fit.rms_residual < 1e-15);
        assert!((fit.g - (0.3f64 * 64.0 / 12.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let samples = vec![
            RigiditySample::new(4.0, 12.5, SampleSource::Experimental).unwrap(),
            RigiditySample::new(16.0, 950.123456789012, SampleSource::FcmCt).unwrap(),
        ];
        let mut buf = Vec::new();
        write_samples_csv(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("height_mm,rigidity_N_per_mm,source\n4.00000000000e0,1.25000000000e1,experimental\n"));
        let back = read_samples_csv(&buf[..]).unwrap();
        assert_eq!(back[0], samples[0]);
        assert!((back[1].rigidity - samples[1].rigidity).abs() < 1e-9);
        let bad = "height_mm,rigidity_N_per_mm,source\n4,-1,fcm-cad\n";
        assert!(matches!(read_samples_csv(bad.as_bytes()), Err(BeamError::Csv { line: 2, .. })));
        assert!(read_samples_csv("h,d\n".as_bytes()).is_err());
    }

    #[test]
    fn report_is_flat_key_value() {
        let fit = GFit { g: 0.244, rms_residual: 0.01, model: BeamModel::Timoshenko, clamped: false };
        let r = format_fit_report(&fit);
        assert_eq!(r, "model=timoshenko\ng_mm=2.44000000000e-1\nrms_residual=1.00000000000e-2\nclamped=false\n");
    }
}

//! Kernel SVM back end: SMO binary solver, one-vs-rest, model files.
//!
//! Model file layout (whitespace separated, floats in shortest
//! round-trip form):
//!
//! ```text
//! tagasc-svm 1
//! kernel <rbf|sigmoid> <gamma> <coef0> <C> <tol>
//! classes <K> dim <d>
//! mean <d values>
//! scale <d values>
//! class <k> bias <b> count <n> converged <0|1>
//! <coef> <d values>        (n support-vector rows, coef = α·y)
//! ```

pub mod kernel;
pub mod smo;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use kernel::{kernel, KernelKind, KernelSpec};
pub use smo::{gram, train_binary, BinarySolution, SmoParams};

use crate::error::{Error, ParseError, Result};
use crate::tensor::Tensor;

/// Back-end hyperparameters. `gamma = None` means `1 / dim`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub kernel: KernelKind,
    pub gamma: Option<f64>,
    pub coef0: f64,
    pub c: f64,
    pub tol: f64,
    /// Iteration cap in passes over the training set.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            kernel: KernelKind::Rbf,
            gamma: None,
            coef0: 0.0,
            c: 1.0,
            tol: 1e-3,
            max_passes: 10_000,
        }
    }
}

impl SvmConfig {
    pub fn kernel_spec(&self, dim: usize) -> Result<KernelSpec> {
        let gamma = self.gamma.unwrap_or(1.0 / dim.max(1) as f64);
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(Error::config(format!("gamma {gamma} must be positive")));
        }
        Ok(KernelSpec {
            kind: self.kernel,
            gamma,
            coef0: self.coef0,
        })
    }
}

/// Per-dimension standardization from training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    /// Standard deviation, or 1 for constant dimensions.
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = x.first() else {
            return Err(Error::DegenerateData("no codes to standardize".into()));
        };
        let d = first.len();
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            if row.len() != d {
                return Err(Error::dim(format!("code of dim {} among dim {d}", row.len())));
            }
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut scale = vec![0.0; d];
        for row in x {
            for ((s, v), m) in scale.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        for s in scale.iter_mut() {
            *s = if *s > 1e-24 { s.sqrt() } else { 1.0 };
        }
        Ok(Self { mean, scale })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::dim(format!(
                "code has dim {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        Ok(x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }
}

/// One class-vs-rest decision function.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryModel {
    pub support: Vec<Vec<f64>>,
    /// `α_i · y_i` per support vector.
    pub coef: Vec<f64>,
    pub bias: f64,
    pub converged: bool,
}

impl BinaryModel {
    pub fn from_solution(x: &[Vec<f64>], y: &[f64], sol: &BinarySolution) -> Self {
        let mut support = Vec::new();
        let mut coef = Vec::new();
        for i in 0..x.len() {
            if sol.alpha[i] > 0.0 {
                support.push(x[i].clone());
                coef.push(sol.alpha[i] * y[i]);
            }
        }
        Self {
            support,
            coef,
            bias: sol.bias,
            converged: sol.converged,
        }
    }

    pub fn decision(&self, z: &[f64], spec: &KernelSpec) -> Result<f64> {
        let mut f = self.bias;
        for (sv, c) in self.support.iter().zip(&self.coef) {
            f += c * kernel(sv, z, spec)?;
        }
        Ok(f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub c: f64,
    pub tol: f64,
    pub scaler: Standardizer,
    pub classes: Vec<BinaryModel>,
}

/// Trains one binary SVM per class on standardized codes.
pub fn train_ovr(
    codes: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    cfg: &SvmConfig,
) -> Result<SvmModel> {
    if num_classes < 2 {
        return Err(Error::config("one-vs-rest needs at least 2 classes"));
    }
    if codes.len() != labels.len() {
        return Err(Error::dim(format!(
            "{} codes but {} labels",
            codes.len(),
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Range(format!("label {bad} with {num_classes} classes")));
    }
    if let Some(k) = (0..num_classes).find(|k| !labels.contains(k)) {
        return Err(Error::DegenerateData(format!(
            "class {k} has no training examples"
        )));
    }
    let scaler = Standardizer::fit(codes)?;
    let x: Vec<Vec<f64>> = codes
        .iter()
        .map(|c| scaler.apply(c))
        .collect::<Result<_>>()?;
    let spec = cfg.kernel_spec(scaler.dim())?;
    let params = SmoParams {
        c: cfg.c,
        tol: cfg.tol,
        max_iter: cfg.max_passes.saturating_mul(x.len()),
    };
    let classes = (0..num_classes)
        .into_par_iter()
        .map(|k| {
            let y: Vec<f64> = labels
                .iter()
                .map(|&l| if l == k { 1.0 } else { -1.0 })
                .collect();
            let sol = train_binary(&x, &y, &spec, &params)?;
            Ok(BinaryModel::from_solution(&x, &y, &sol))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SvmModel {
        kernel: spec,
        c: cfg.c,
        tol: cfg.tol,
        scaler,
        classes,
    })
}

impl SvmModel {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn dim(&self) -> usize {
        self.scaler.dim()
    }

    pub fn converged(&self) -> bool {
        self.classes.iter().all(|c| c.converged)
    }

    /// Per-class decision values `[K]` for a raw (unstandardized) code.
    pub fn decision_values(&self, code: &[f64]) -> Result<Tensor> {
        let z = self.scaler.apply(code)?;
        let v = self
            .classes
            .iter()
            .map(|m| m.decision(&z, &self.kernel))
            .collect::<Result<Vec<_>>>()?;
        Ok(Tensor::vector(v))
    }

    /// Argmax of the decision values; ties go to the lowest class.
    pub fn predict(&self, code: &[f64]) -> Result<usize> {
        let v = self.decision_values(code)?;
        let mut best = 0;
        for (k, &d) in v.data().iter().enumerate() {
            if d > v.data()[best] {
                best = k;
            }
        }
        Ok(best)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("tagasc-svm 1\n");
        let k = &self.kernel;
        let _ = writeln!(
            s,
            "kernel {} {:?} {:?} {:?} {:?}",
            k.kind, k.gamma, k.coef0, self.c, self.tol
        );
        let _ = writeln!(s, "classes {} dim {}", self.num_classes(), self.dim());
        push_row(&mut s, "mean", &self.scaler.mean);
        push_row(&mut s, "scale", &self.scaler.scale);
        for (i, m) in self.classes.iter().enumerate() {
            let _ = writeln!(
                s,
                "class {i} bias {:?} count {} converged {}",
                m.bias,
                m.support.len(),
                u8::from(m.converged)
            );
            for (sv, c) in m.support.iter().zip(&m.coef) {
                let mut row = vec![*c];
                row.extend_from_slice(sv);
                let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
                s.push_str(&line.join(" "));
                s.push('\n');
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            lines
                .next()
                .map(|(i, l)| (i + 1, l.split_whitespace().collect()))
                .ok_or_else(|| {
                    Error::Parse(ParseError::Format(format!("SVM model ends before {what}")))
                })
        };
        let (ln, magic) = next("header")?;
        if magic != ["tagasc-svm", "1"] {
            return Err(line_err(ln, "not a version-1 SVM model file"));
        }
        let (ln, kl) = next("kernel line")?;
        if kl.len() != 6 || kl[0] != "kernel" {
            return Err(line_err(ln, "expected 'kernel <kind> <gamma> <coef0> <C> <tol>'"));
        }
        let kind: KernelKind = kl[1].parse().map_err(|_| line_err(ln, "unknown kernel"))?;
        let kernel = KernelSpec {
            kind,
            gamma: num(ln, kl[2])?,
            coef0: num(ln, kl[3])?,
        };
        let (c, tol) = (num(ln, kl[4])?, num(ln, kl[5])?);
        let (ln, cl) = next("class count")?;
        if cl.len() != 4 || cl[0] != "classes" || cl[2] != "dim" {
            return Err(line_err(ln, "expected 'classes <K> dim <d>'"));
        }
        let k: usize = int(ln, cl[1])?;
        let d: usize = int(ln, cl[3])?;
        let mut row = |tag: &str, width: usize| -> Result<Vec<f64>> {
            let (ln, r) = next(tag)?;
            if r.first() != Some(&tag) || r.len() != width + 1 {
                return Err(line_err(ln, format!("expected '{tag}' with {width} values")));
            }
            r[1..].iter().map(|v| num(ln, v)).collect()
        };
        let mean = row("mean", d)?;
        let scale = row("scale", d)?;
        let mut classes = Vec::with_capacity(k);
        for i in 0..k {
            let (ln, h) = next("class block")?;
            if h.len() != 8 || h[0] != "class" || h[2] != "bias" || h[4] != "count" || h[6] != "converged" {
                return Err(line_err(ln, "expected 'class <k> bias <b> count <n> converged <0|1>'"));
            }
            if int::<usize>(ln, h[1])? != i {
                return Err(line_err(ln, format!("expected class {i}")));
            }
            let bias = num(ln, h[3])?;
            let count: usize = int(ln, h[5])?;
            let converged = int::<u8>(ln, h[7])? == 1;
            let mut support = Vec::with_capacity(count);
            let mut coef = Vec::with_capacity(count);
            for _ in 0..count {
                let (ln, r) = next("support vector")?;
                if r.len() != d + 1 {
                    return Err(line_err(ln, format!("expected {} values", d + 1)));
                }
                let v: Vec<f64> = r.iter().map(|x| num(ln, x)).collect::<Result<_>>()?;
                coef.push(v[0]);
                support.push(v[1..].to_vec());
            }
            classes.push(BinaryModel {
                support,
                coef,
                bias,
                converged,
            });
        }
        if let Ok((ln, _)) = next("end") {
            return Err(line_err(ln, "trailing content after last class block"));
        }
        Ok(Self {
            kernel,
            c,
            tol,
            scaler: Standardizer { mean, scale },
            classes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        Ok(fs::write(path, self.to_text())?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

fn push_row(s: &mut String, tag: &str, v: &[f64]) {
    s.push_str(tag);
    for x in v {
        let _ = write!(s, " {x:?}");
    }
    s.push('\n');
}

fn line_err(line: usize, reason: impl Into<String>) -> Error {
    Error::Parse(ParseError::Line {
        line,
        reason: reason.into(),
    })
}

fn num(line: usize, s: &str) -> Result<f64> {
    s.parse()
        .map_err(|_| line_err(line, format!("'{s}' is not a number")))
}

fn int<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| line_err(line, format!("'{s}' is not an integer")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs() -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for k in 0..3 {
            for i in 0..5 {
                let t = i as f64 * 0.1;
                x.push(vec![4.0 * k as f64 + t, -3.0 * k as f64 + t * t, 1.0]);
                y.push(k);
            }
        }
        (x, y)
    }

    #[test]
    fn separable_training_accuracy() {
        let (x, y) = blobs();
        let m = train_ovr(&x, &y, 3, &SvmConfig::default()).unwrap();
        assert!(m.converged());
        for (xi, yi) in x.iter().zip(&y) {
            assert_eq!(m.predict(xi).unwrap(), *yi);
            assert_eq!(m.decision_values(xi).unwrap().len(), 3);
        }
    }

    #[test]
    fn missing_class_named() {
        let (x, y) = blobs();
        let e = train_ovr(&x, &y, 4, &SvmConfig::default()).unwrap_err();
        assert!(e.to_string().contains("class 3"), "{e}");
    }

    #[test]
    fn text_round_trip_is_exact() {
        let (x, y) = blobs();
        let cfg = SvmConfig {
            kernel: KernelKind::Sigmoid,
            gamma: Some(0.1),
            coef0: -0.3,
            ..SvmConfig::default()
        };
        let m = train_ovr(&x, &y, 3, &cfg).unwrap();
        let back = SvmModel::parse(&m.to_text()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_text(), m.to_text());
    }

    #[test]
    fn truncated_model_rejected() {
        let (x, y) = blobs();
        let m = train_ovr(&x, &y, 3, &SvmConfig::default()).unwrap();
        let text = m.to_text();
        let cut: String = text.lines().take(7).map(|l| format!("{l}\n")).collect();
        assert!(matches!(SvmModel::parse(&cut), Err(Error::Parse(_))));
    }
}

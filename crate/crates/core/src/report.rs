//! Row-specific, column-specific and joint co-movement equations of a fitted model.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::FitResult;
use crate::stats::two_sided_p;

/// One term `coefficient · y[row, col]`. A `None` label stands for the index the
/// equation ranges over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub row: Option<String>,
    pub col: Option<String>,
    pub coefficient: f64,
    /// `None` for normalized coefficients and for coordinates without a standard error.
    pub se: Option<f64>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equation {
    pub terms: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComovementReport {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Hold for every column.
    pub row_equations: Vec<Equation>,
    /// Hold for every row.
    pub column_equations: Vec<Equation>,
    pub joint_equations: Vec<Equation>,
}

/// Default labels `prefix1, prefix2, …`.
pub fn default_labels(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn term(row: Option<&String>, col: Option<&String>, coefficient: f64, se: Option<f64>) -> Term {
    let se = se.and_then(finite);
    let p_value = se.filter(|s| *s > 0.0).map(|s| two_sided_p(coefficient / s));
    Term { row: row.cloned(), col: col.cloned(), coefficient, se, p_value }
}

/// Builds the three equation families. Joint coefficients are products `δ*_i γ*_l`, with
/// delta-method standard errors
/// `Var(δγ) ≈ γ² Var(δ) + δ² Var(γ) + 2 δ γ Cov(δ, γ)`.
pub fn comovement_report(fit: &FitResult, row_labels: &[String], col_labels: &[String]) -> Result<ComovementReport> {
    let d = fit.dims;
    if row_labels.len() != d.n1 || col_labels.len() != d.n2 {
        return Err(Error::InvalidArgument(format!(
            "expected {} row and {} column labels, got {} and {}",
            d.n1,
            d.n2,
            row_labels.len(),
            col_labels.len()
        )));
    }
    let layout = fit.layout();
    let (m1, m2) = (d.n1 - d.r1, d.n2 - d.r2);
    let ds = &fit.params.delta_star;
    let gs = &fit.params.gamma_star;

    let row_equations = (0..m1)
        .map(|m| {
            let mut terms = vec![term(Some(&row_labels[m]), None, 1.0, None)];
            for i in 0..d.r1 {
                terms.push(term(Some(&row_labels[m1 + i]), None, ds[(i, m)], Some(fit.se_delta[(i, m)])));
            }
            Equation { terms }
        })
        .collect();
    let column_equations = (0..m2)
        .map(|k| {
            let mut terms = vec![term(None, Some(&col_labels[k]), 1.0, None)];
            for l in 0..d.r2 {
                terms.push(term(None, Some(&col_labels[m2 + l]), gs[(l, k)], Some(fit.se_gamma[(l, k)])));
            }
            Equation { terms }
        })
        .collect();

    let mut joint_equations = vec![];
    for k in 0..m2 {
        for m in 0..m1 {
            let mut terms = vec![];
            // Column factor: own column with weight 1, then the γ* columns.
            let cols = std::iter::once((k, None)).chain((0..d.r2).map(|l| (m2 + l, Some(l))));
            for (col, gl) in cols {
                let rows = std::iter::once((m, None)).chain((0..d.r1).map(|i| (m1 + i, Some(i))));
                for (row, di) in rows {
                    let (coef, se) = match (di, gl) {
                        (None, None) => (1.0, None),
                        (Some(i), None) => (ds[(i, m)], Some(fit.se_delta[(i, m)])),
                        (None, Some(l)) => (gs[(l, k)], Some(fit.se_gamma[(l, k)])),
                        (Some(i), Some(l)) => {
                            let (a, b) = (ds[(i, m)], gs[(l, k)]);
                            let (ia, ib) = (layout.delta_index(i, m), layout.gamma_index(l, k));
                            let var = b * b * fit.cov(ia, ia) + a * a * fit.cov(ib, ib) + 2.0 * a * b * fit.cov(ia, ib);
                            (a * b, finite(var).map(|v| v.max(0.0).sqrt()))
                        }
                    };
                    terms.push(term(Some(&row_labels[row]), Some(&col_labels[col]), coef, se));
                }
            }
            joint_equations.push(Equation { terms });
        }
    }
    Ok(ComovementReport {
        row_labels: row_labels.to_vec(),
        col_labels: col_labels.to_vec(),
        row_equations,
        column_equations,
        joint_equations,
    })
}

fn series_name(t: &Term, row_idx: &str, col_idx: &str) -> String {
    format!("y[{},{}]", t.row.as_deref().unwrap_or(row_idx), t.col.as_deref().unwrap_or(col_idx))
}

fn se_text(se: Option<f64>) -> String {
    se.map_or_else(|| "(n/a)".to_string(), |s| format!("({s:.3})"))
}

fn render_equation(eq: &Equation, idx: usize, row_idx: &str, col_idx: &str) -> String {
    let mut s = String::new();
    for (n, t) in eq.terms.iter().enumerate() {
        let name = series_name(t, row_idx, col_idx);
        let normalized = t.coefficient == 1.0 && t.se.is_none();
        if n == 0 && normalized {
            s.push_str(&name);
            continue;
        }
        let sign = if t.coefficient < 0.0 { '-' } else { '+' };
        if n > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{sign} {:.3} {} {name}", t.coefficient.abs(), se_text(t.se));
    }
    let _ = write!(s, " = e*_{idx}");
    s
}

impl ComovementReport {
    /// Plain-text rendering: the equations with standard errors in parentheses, then an
    /// aligned coefficient table with p-values.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let sections: [(&str, &Vec<Equation>, &str, &str); 3] = [
            ("Row-specific co-movements", &self.row_equations, "", "j"),
            ("Column-specific co-movements", &self.column_equations, "i", ""),
            ("Joint co-movements", &self.joint_equations, "", ""),
        ];
        for (title, eqs, ri, ci) in sections {
            let _ = write!(out, "{title}");
            match (ri.is_empty(), ci.is_empty()) {
                (true, false) => {
                    let _ = write!(out, ", j in {{{}}}", self.col_labels.join(", "));
                }
                (false, true) => {
                    let _ = write!(out, ", i in {{{}}}", self.row_labels.join(", "));
                }
                _ => {}
            }
            out.push('\n');
            if eqs.is_empty() {
                out.push_str("  (none: full rank in this dimension)\n");
            }
            for (n, eq) in eqs.iter().enumerate() {
                let _ = writeln!(out, "  {}", render_equation(eq, n + 1, ri, ci));
            }
            out.push('\n');
        }
        out.push_str(&self.coefficient_table());
        out
    }

    fn coefficient_table(&self) -> String {
        let mut rows: Vec<[String; 5]> = vec![];
        let families = [
            ("row", &self.row_equations, "", "j"),
            ("column", &self.column_equations, "i", ""),
            ("joint", &self.joint_equations, "", ""),
        ];
        for (family, eqs, ri, ci) in families {
            for (n, eq) in eqs.iter().enumerate() {
                for t in eq.terms.iter().filter(|t| t.se.is_some() || t.coefficient != 1.0) {
                    rows.push([
                        format!("{family} {}", n + 1),
                        series_name(t, ri, ci),
                        format!("{:.3}", t.coefficient),
                        t.se.map_or_else(|| "n/a".into(), |s| format!("{s:.3}")),
                        t.p_value.map_or_else(|| "n/a".into(), |p| format!("{p:.4}")),
                    ]);
                }
            }
        }
        let header = ["equation", "term", "coef", "se", "p-value"].map(String::from);
        let mut widths = header.clone().map(|h| h.len());
        for r in &rows {
            for (w, c) in widths.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for r in std::iter::once(&header).chain(&rows) {
            let line = format!(
                "{:<w0$}  {:<w1$}  {:>w2$}  {:>w3$}  {:>w4$}",
                r[0],
                r[1],
                r[2],
                r[3],
                r[4],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2],
                w3 = widths[3],
                w4 = widths[4]
            );
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimate::{FitDiagnostics, FitResult};
    use crate::likelihood::ThetaLayout;
    use crate::linalg::{Mat, Vector};
    use crate::model::{Dims, PseudoStructParams};

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    /// A fit with prescribed `δ*`, `γ*` and coefficient covariance.
    fn synthetic_fit(delta: &[f64], gamma: &[f64], cov_coef: &Mat) -> FitResult {
        let dims = Dims::new(3, 4, 2, 1, 1).unwrap();
        let params = PseudoStructParams {
            delta_star: Mat::from_column_slice(2, 1, delta),
            gamma_star: Mat::from_row_slice(1, 3, gamma),
            u3: vec![Mat::from_element(3, 2, 0.1)],
            u4: vec![Mat::from_element(4, 1, 0.1)],
            sigma1: Mat::identity(3, 3),
            sigma2: Mat::identity(4, 4),
        };
        let layout = ThetaLayout::new(dims).unwrap();
        let theta = layout.pack(&params).unwrap();
        let mut covariance = Mat::zeros(layout.len(), layout.len());
        covariance.view_mut((0, 0), (5, 5)).copy_from(cov_coef);
        let se = |i: usize| cov_coef[(i, i)].sqrt();
        FitResult {
            dims,
            n_obs: 100,
            sample_start: 1,
            theta_hat: theta,
            params,
            loglik: 0.0,
            info: Mat::identity(layout.len(), layout.len()),
            covariance,
            se_delta: Mat::from_fn(2, 1, |i, _| se(i)),
            se_gamma: Mat::from_fn(1, 3, |_, k| se(2 + k)),
            diagnostics: FitDiagnostics {
                grad_norm: 0.0,
                grad_inf_norm: 0.0,
                hessian_min_eig: 1.0,
                hessian_norm: 1.0,
                n_starts_converged: 1,
                chosen_start_id: 0,
                saddle_flag: false,
                warm_start_available: true,
                data_scale: 1.0,
                warnings: vec![],
            },
            starts: vec![],
        }
    }

    fn diag_cov(se: &[f64]) -> Mat {
        Mat::from_diagonal(&Vector::from_iterator(se.len(), se.iter().map(|s| s * s)))
    }

    #[test]
    fn published_layout_and_product() {
        let f = synthetic_fit(
            &[-0.323, 0.002],
            &[-1.190, -1.305, -1.370],
            &diag_cov(&[0.037, 0.004, 0.145, 0.161, 0.148]),
        );
        let rows = labels(&["GDP", "PROD", "IR"]);
        let cols = labels(&["USA", "CAN", "DEU", "FRA"]);
        let r = comovement_report(&f, &rows, &cols).unwrap();
        assert_eq!(r.row_equations.len(), 1);
        assert_eq!(r.column_equations.len(), 3);
        assert_eq!(r.joint_equations.len(), 3);
        let usa = &r.joint_equations[0];
        let prod_fra = usa
            .terms
            .iter()
            .find(|t| t.row.as_deref() == Some("PROD") && t.col.as_deref() == Some("FRA"))
            .unwrap();
        assert!((prod_fra.coefficient - 0.323 * 1.190).abs() < 1e-12);
        assert_eq!(format!("{:.3}", prod_fra.coefficient), "0.384");
        // Independent coordinates: sqrt(γ² σ_δ² + δ² σ_γ²).
        let want = ((1.19f64 * 0.037).powi(2) + (0.323f64 * 0.145).powi(2)).sqrt();
        assert!((prod_fra.se.unwrap() - want).abs() < 1e-12);
        let text = r.render_text();
        assert!(text.contains("y[GDP,j] - 0.323 (0.037) y[PROD,j] + 0.002 (0.004) y[IR,j] = e*_1"), "{text}");
        assert!(text.contains("y[i,USA] - 1.190 (0.145) y[i,FRA] = e*_1"), "{text}");
        assert!(text.contains("+ 0.384 (0.064) y[PROD,FRA]"), "{text}");
        assert!(text.contains("- 0.002 (0.005) y[IR,FRA] = e*_1"), "{text}");
    }

    #[test]
    fn zero_delta_reduces_joint_to_column_equations() {
        let f = synthetic_fit(&[0.0, 0.0], &[0.5, -0.2, 0.9], &diag_cov(&[0.1, 0.1, 0.2, 0.2, 0.2]));
        let r = comovement_report(&f, &default_labels("r", 3), &default_labels("c", 4)).unwrap();
        for (k, (joint, col)) in r.joint_equations.iter().zip(&r.column_equations).enumerate() {
            let nonzero: Vec<&Term> = joint.terms.iter().filter(|t| t.coefficient != 0.0).collect();
            assert_eq!(nonzero.len(), col.terms.len());
            for (a, b) in nonzero.iter().zip(&col.terms) {
                assert_eq!(a.row.as_deref(), Some("r1"), "equation {k}");
                assert_eq!(a.col, b.col);
                assert_eq!(a.coefficient, b.coefficient);
            }
        }
    }

    #[test]
    fn delta_method_zero_factor() {
        // δ*_1 = 0 with independent coordinates: SE(δγ) = |γ| SE(δ).
        let f = synthetic_fit(&[0.0, 0.4], &[-1.5, 0.3, 0.7], &diag_cov(&[0.05, 0.1, 0.2, 0.2, 0.2]));
        let r = comovement_report(&f, &default_labels("r", 3), &default_labels("c", 4)).unwrap();
        let t = r.joint_equations[0].terms.iter().find(|t| t.row.as_deref() == Some("r2") && t.col.as_deref() == Some("c4")).unwrap();
        assert_eq!(t.coefficient, 0.0);
        assert!((t.se.unwrap() - 1.5 * 0.05).abs() < 1e-15);
    }

    #[test]
    fn delta_method_uses_covariance() {
        let mut cov = diag_cov(&[0.05, 0.1, 0.2, 0.2, 0.2]);
        cov[(0, 2)] = 0.004;
        cov[(2, 0)] = 0.004;
        let (a, b) = (0.6, -1.5);
        let f = synthetic_fit(&[a, 0.4], &[b, 0.3, 0.7], &cov);
        let r = comovement_report(&f, &default_labels("r", 3), &default_labels("c", 4)).unwrap();
        let t = r.joint_equations[0].terms.iter().find(|t| t.row.as_deref() == Some("r2") && t.col.as_deref() == Some("c4")).unwrap();
        let want = (b * b * 0.0025 + a * a * 0.04 + 2.0 * a * b * 0.004f64).sqrt();
        assert!((t.se.unwrap() - want).abs() < 1e-15);
        assert!((t.p_value.unwrap() - two_sided_p(a * b / want)).abs() < 1e-15);
    }

    #[test]
    fn label_mismatch() {
        let f = synthetic_fit(&[0.1, 0.2], &[0.1, 0.2, 0.3], &diag_cov(&[0.1; 5]));
        assert!(comovement_report(&f, &default_labels("r", 2), &default_labels("c", 4)).is_err());
    }

    #[test]
    fn missing_se_renders_as_unavailable() {
        let mut f = synthetic_fit(&[0.1, 0.2], &[0.1, 0.2, 0.3], &diag_cov(&[0.1; 5]));
        f.se_delta[(0, 0)] = f64::NAN;
        f.covariance[(0, 0)] = f64::NAN;
        let r = comovement_report(&f, &default_labels("r", 3), &default_labels("c", 4)).unwrap();
        assert!(r.row_equations[0].terms[1].se.is_none());
        assert!(r.render_text().contains("+ 0.100 (n/a) y[r2,j]"));
    }
}

//! Versioned human-readable fit files: key-value lines plus matrix blocks.
//! All numbers are written with 17 significant digits so a write-then-read
//! round trip reproduces the fit to full double precision.

use std::fmt::Write as _;
use std::path::Path;

use rtmcd::estimator::{EstimatorConfig, ReweightedFit, StartTag, Variant};
use rtmcd::initial::WrapParams;
use rtmcd::univariate::{ColumnScaling, LocScale};
use rtmcd::SymMatrix;

use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

pub fn variant_name(v: Variant) -> &'static str {
    match v {
        Variant::I => "i",
        Variant::Id => "id",
        Variant::Idc => "idc",
    }
}

pub fn parse_variant(s: &str) -> Result<Variant, CliError> {
    match s {
        "i" => Ok(Variant::I),
        "id" => Ok(Variant::Id),
        "idc" => Ok(Variant::Idc),
        other => Err(CliError::Input(format!("unknown variant '{other}'"))),
    }
}

fn start_name(tag: StartTag) -> &'static str {
    match tag {
        StartTag::Wrapped => "wrapped",
        StartTag::Gsscm => "gsscm",
        StartTag::Warm => "warm",
    }
}

fn parse_start(s: &str) -> Result<StartTag, CliError> {
    match s {
        "wrapped" => Ok(StartTag::Wrapped),
        "gsscm" => Ok(StartTag::Gsscm),
        "warm" => Ok(StartTag::Warm),
        other => Err(CliError::Input(format!("unknown start tag '{other}'"))),
    }
}

fn vector_line(out: &mut String, key: &str, values: &[f64]) {
    out.push_str(key);
    for v in values {
        let _ = write!(out, " {v:.17e}");
    }
    out.push('\n');
}

fn matrix_block(out: &mut String, key: &str, m: &SymMatrix) {
    out.push_str(key);
    out.push('\n');
    for i in 0..m.dim() {
        let mut sep = "";
        for j in 0..m.dim() {
            let _ = write!(out, "{sep}{:.17e}", m.get(i, j));
            sep = " ";
        }
        out.push('\n');
    }
}

/// Serializes a fit together with the configuration it was produced under.
pub fn write_fit(path: &Path, fit: &ReweightedFit, config: &EstimatorConfig) -> Result<(), CliError> {
    let p = fit.width();
    let mut out = String::new();
    let _ = writeln!(out, "rtmcd-fit {FORMAT_VERSION}");
    let _ = writeln!(out, "p {p}");
    let _ = writeln!(out, "variant {}", variant_name(config.variant));
    let _ = writeln!(out, "alpha {:.17e}", config.alpha);
    let _ = writeln!(out, "flag_quantile {:.17e}", config.flag_quantile);
    let _ = writeln!(out, "kappa_max {:.17e}", config.kappa_max);
    let _ = writeln!(out, "wrap_b {:.17e}", config.wrap_params.b);
    let _ = writeln!(out, "wrap_c {:.17e}", config.wrap_params.c);
    let _ = writeln!(out, "wrap_q1 {:.17e}", config.wrap_params.q1);
    let _ = writeln!(out, "wrap_q2 {:.17e}", config.wrap_params.q2);
    let _ = writeln!(out, "chosen_start {}", start_name(fit.chosen_start));
    let loc: Vec<f64> = fit.scaling.columns.iter().map(|c| c.location).collect();
    let sc: Vec<f64> = fit.scaling.columns.iter().map(|c| c.scale).collect();
    vector_line(&mut out, "scaling_location", &loc);
    vector_line(&mut out, "scaling_scale", &sc);
    vector_line(&mut out, "center_raw", &fit.center_raw);
    vector_line(&mut out, "center_rew", &fit.center_rew);
    matrix_block(&mut out, "scatter_raw", &fit.scatter_raw);
    matrix_block(&mut out, "scatter_rew", &fit.scatter_rew);
    std::fs::write(path, out).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

struct Lines<'a> {
    path: &'a Path,
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self) -> Result<(usize, &'a str), CliError> {
        self.iter
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| CliError::Input(format!("{}: unexpected end of file", self.path.display())))
    }

    fn keyed(&mut self, key: &str) -> Result<Vec<&'a str>, CliError> {
        let (line_no, line) = self.next()?;
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some(k) if k == key => Ok(tokens.collect()),
            _ => Err(CliError::Input(format!(
                "{}: line {line_no}: expected '{key}'",
                self.path.display()
            ))),
        }
    }

    fn floats(&mut self, key: &str, expect: usize) -> Result<Vec<f64>, CliError> {
        let tokens = self.keyed(key)?;
        if tokens.len() != expect {
            return Err(CliError::Input(format!(
                "{}: '{key}' expects {expect} values, found {}",
                self.path.display(),
                tokens.len()
            )));
        }
        tokens
            .iter()
            .map(|t| {
                t.parse::<f64>().map_err(|_| {
                    CliError::Input(format!("{}: bad number '{t}' under '{key}'", self.path.display()))
                })
            })
            .collect()
    }

    fn matrix(&mut self, key: &str, p: usize) -> Result<SymMatrix, CliError> {
        let tokens = self.keyed(key)?;
        if !tokens.is_empty() {
            return Err(CliError::Input(format!(
                "{}: '{key}' header carries no values",
                self.path.display()
            )));
        }
        let mut m = SymMatrix::zeros(p);
        for i in 0..p {
            let (line_no, line) = self.next()?;
            let row: Result<Vec<f64>, _> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect();
            let row = row.map_err(|_| {
                CliError::Input(format!("{}: line {line_no}: bad matrix row", self.path.display()))
            })?;
            if row.len() != p {
                return Err(CliError::Input(format!(
                    "{}: line {line_no}: expected {p} values",
                    self.path.display()
                )));
            }
            for (j, &v) in row.iter().enumerate().take(i + 1) {
                m.set(i, j, v);
            }
        }
        Ok(m)
    }
}

/// Reads a fit file back, recovering the fit and its configuration.
pub fn read_fit(path: &Path) -> Result<(ReweightedFit, EstimatorConfig), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut lines = Lines {
        path,
        iter: text.lines().enumerate(),
    };

    let header = lines.keyed("rtmcd-fit")?;
    match header.first().and_then(|v| v.parse::<u32>().ok()) {
        Some(FORMAT_VERSION) => {}
        Some(v) => {
            return Err(CliError::Input(format!(
                "{}: fit format version {v} unsupported (expected {FORMAT_VERSION})",
                path.display()
            )))
        }
        None => {
            return Err(CliError::Input(format!(
                "{}: malformed fit format header",
                path.display()
            )))
        }
    }

    let p = lines
        .keyed("p")?
        .first()
        .and_then(|v| v.parse::<usize>().ok())
        .ok_or_else(|| CliError::Input(format!("{}: malformed 'p' line", path.display())))?;
    let variant = parse_variant(
        lines
            .keyed("variant")?
            .first()
            .copied()
            .unwrap_or_default(),
    )?;
    let alpha = lines.floats("alpha", 1)?[0];
    let flag_quantile = lines.floats("flag_quantile", 1)?[0];
    let kappa_max = lines.floats("kappa_max", 1)?[0];
    let wrap_b = lines.floats("wrap_b", 1)?[0];
    let wrap_c = lines.floats("wrap_c", 1)?[0];
    let wrap_q1 = lines.floats("wrap_q1", 1)?[0];
    let wrap_q2 = lines.floats("wrap_q2", 1)?[0];
    let chosen_start = parse_start(
        lines
            .keyed("chosen_start")?
            .first()
            .copied()
            .unwrap_or_default(),
    )?;
    let loc = lines.floats("scaling_location", p)?;
    let sc = lines.floats("scaling_scale", p)?;
    let center_raw = lines.floats("center_raw", p)?;
    let center_rew = lines.floats("center_rew", p)?;
    let scatter_raw = lines.matrix("scatter_raw", p)?;
    let scatter_rew = lines.matrix("scatter_rew", p)?;

    let config = EstimatorConfig {
        alpha,
        kappa_max,
        flag_quantile,
        variant,
        wrap_params: WrapParams {
            b: wrap_b,
            c: wrap_c,
            q1: wrap_q1,
            q2: wrap_q2,
        },
        ..EstimatorConfig::default()
    };
    let fit = ReweightedFit {
        center_raw,
        center_rew,
        scatter_raw,
        scatter_rew,
        scaling: ColumnScaling {
            columns: loc
                .into_iter()
                .zip(sc)
                .map(|(location, scale)| LocScale { location, scale })
                .collect(),
        },
        chosen_start,
        // Training-row membership is not part of the persisted model.
        weights: Vec::new(),
    };
    Ok((fit, config))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_reproduces_fit() {
        let p = 3;
        let mut scatter_raw = SymMatrix::identity(p);
        scatter_raw.set(1, 0, 0.123456789012345678);
        let mut scatter_rew = SymMatrix::identity(p);
        scatter_rew.set(2, 1, -0.987654321098765432);
        let fit = ReweightedFit {
            center_raw: vec![0.1, -0.2, 1.0 / 3.0],
            center_rew: vec![0.11, -0.19, 2.0 / 7.0],
            scatter_raw,
            scatter_rew,
            scaling: ColumnScaling {
                columns: (0..p)
                    .map(|j| LocScale {
                        location: j as f64 + 0.5,
                        scale: 1.0 + j as f64 / 3.0,
                    })
                    .collect(),
            },
            chosen_start: StartTag::Gsscm,
            weights: vec![true, false],
        };
        let config = EstimatorConfig {
            alpha: 0.75,
            ..EstimatorConfig::default()
        };
        let dir = std::env::temp_dir().join("rtmcd-fitfile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.fit");
        write_fit(&path, &fit, &config).unwrap();
        let (loaded, loaded_cfg) = read_fit(&path).unwrap();
        assert_eq!(loaded_cfg.alpha, config.alpha);
        assert_eq!(loaded.chosen_start, StartTag::Gsscm);
        for j in 0..p {
            assert!((loaded.center_rew[j] - fit.center_rew[j]).abs() <= 1e-12);
            assert!((loaded.scaling.columns[j].scale - fit.scaling.columns[j].scale).abs() <= 1e-12);
            for k in 0..p {
                assert!(
                    (loaded.scatter_rew.get(j, k) - fit.scatter_rew.get(j, k)).abs() <= 1e-12
                );
                assert!(
                    (loaded.scatter_raw.get(j, k) - fit.scatter_raw.get(j, k)).abs() <= 1e-12
                );
            }
        }
    }

    #[test]
    fn version_mismatch_rejected() {
        let dir = std::env::temp_dir().join("rtmcd-fitfile-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad_version.fit");
        std::fs::write(&path, "rtmcd-fit 99\np 1\n").unwrap();
        let err = read_fit(&path).unwrap_err();
        assert!(err.to_string().contains("version 99"));
    }
}

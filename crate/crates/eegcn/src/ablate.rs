//! Ablation and hyperparameter sweeps: each variant is trained with several
//! seeds and summarised by its median dev F1.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::data::{build_model, Prepared};
use crate::error::{Error, Result};
use crate::settings::Settings;
use crate::train::train;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Switch {
    Tdl,
    Naeu,
    TdlNaeu,
    Mder,
    Bilstm,
}

impl Switch {
    pub fn name(self) -> &'static str {
        match self {
            Switch::Tdl => "TDL",
            Switch::Naeu => "NAEU",
            Switch::TdlNaeu => "TDL&NAEU",
            Switch::Mder => "MDER",
            Switch::Bilstm => "BiLSTM",
        }
    }

    /// Turns the component off in `s`.
    pub fn apply(self, s: &mut Settings) {
        let m = &mut s.model;
        match self {
            Switch::Tdl => m.use_typed_labels = false,
            Switch::Naeu => m.use_naeu = false,
            Switch::TdlNaeu => {
                m.use_typed_labels = false;
                m.use_naeu = false;
            }
            Switch::Mder => m.edge_dim = 1,
            Switch::Bilstm => m.use_bilstm = false,
        }
    }
}

impl FromStr for Switch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tdl" => Ok(Switch::Tdl),
            "naeu" => Ok(Switch::Naeu),
            "tdl&naeu" | "tdl+naeu" => Ok(Switch::TdlNaeu),
            "mder" => Ok(Switch::Mder),
            "bilstm" => Ok(Switch::Bilstm),
            _ => Err(Error::Usage(format!("unknown ablation switch `{s}`"))),
        }
    }
}

/// One variant's scores across seeds.
#[derive(Clone, Debug, Serialize)]
pub struct Row {
    pub variant: String,
    pub seeds: usize,
    pub dev_f1: Vec<f64>,
    pub median_dev_f1: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}

/// Best dev F1 of `settings` for seeds `seed, seed + 1, …`.
pub fn train_seeds(settings: &Settings, data: &Prepared, seeds: usize) -> Result<Vec<f64>> {
    (0..seeds as u64)
        .map(|k| {
            let mut s = settings.clone();
            s.seed = settings.seed + k;
            let (mut model, _) = build_model(&s, &data.encoder)?;
            let state = train(&mut model, &data.encoder.tags, &data.train_enc, &data.dev_enc, s.seed, None)?;
            Ok(state.best_dev_f1)
        })
        .collect()
}

fn row(variant: String, scores: Vec<f64>) -> Row {
    Row {
        variant,
        seeds: scores.len(),
        median_dev_f1: median(&scores),
        dev_f1: scores,
    }
}

/// The full model followed by one row per switch.
pub fn run_ablation(base: &Settings, data: &Prepared, switches: &[Switch], seeds: usize) -> Result<Vec<Row>> {
    let mut rows = vec![row("EE-GCN".into(), train_seeds(base, data, seeds)?)];
    for &sw in switches {
        let mut s = base.clone();
        sw.apply(&mut s);
        rows.push(row(format!("-- {}", sw.name()), train_seeds(&s, data, seeds)?));
    }
    Ok(rows)
}

/// Values swept on each axis.
pub fn axis_values(axis: &str) -> Result<Vec<usize>> {
    match axis {
        "edge_dim" => Ok(vec![1, 20, 40, 50, 60, 80]),
        "layers" => Ok((1..=10).collect()),
        _ => Err(Error::Usage(format!("unknown sweep axis `{axis}`; expected edge_dim or layers"))),
    }
}

pub fn run_sweep(base: &Settings, data: &Prepared, axis: &str, values: &[usize], seeds: usize) -> Result<Vec<Row>> {
    values
        .iter()
        .map(|v| {
            let mut s = base.clone();
            s.set(axis, &v.to_string())?;
            Ok(row(format!("{axis}={v}"), train_seeds(&s, data, seeds)?))
        })
        .collect()
}

pub fn table(rows: &[Row]) -> String {
    let mut out = String::from("variant       seeds  median_dev_f1\n");
    for r in rows {
        let _ = writeln!(out, "{:<12}  {:>5}  {:>13.4}", r.variant, r.seeds, r.median_dev_f1);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[0.3, 0.1, 0.9, 0.5, 0.2]), 0.3);
        assert_eq!(median(&[0.4, 0.2]), 0.30000000000000004);
    }

    #[test]
    fn switch_names_and_axes() {
        assert_eq!("tdl&naeu".parse::<Switch>().unwrap(), Switch::TdlNaeu);
        assert!("attention".parse::<Switch>().is_err());
        assert_eq!(axis_values("layers").unwrap().len(), 10);
        let e = axis_values("edge_dim").unwrap();
        assert!(e.contains(&1) && e.contains(&50));
        assert!(axis_values("lr").is_err());
    }

    #[test]
    fn both_switches_off() {
        let mut s = Settings::default();
        Switch::TdlNaeu.apply(&mut s);
        assert!(!s.model.use_typed_labels && !s.model.use_naeu);
    }
}

//! Export of learned decay rates and attention maps.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::data::{Dataset, PatientCase};
use crate::model::TrainedModel;
use crate::{Error, Result};

/// Name of the position holding the baseline embedding.
pub const BASELINE_POSITION: &str = "baseline";

/// Case selector of the form `label=1` or `<baseline name>=<value>`.
#[derive(Clone, Debug, PartialEq)]
pub struct CaseFilter {
    pub key: String,
    pub value: f64,
}

impl FromStr for CaseFilter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (key, value) = s
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("filter `{s}` is not key=value")))?;
        let value = value
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("filter `{s}` has a non-numeric value")))?;
        Ok(Self {
            key: key.trim().to_string(),
            value,
        })
    }
}

impl CaseFilter {
    /// Indices of matching cases, evaluated on raw (unnormalized) values.
    pub fn select(&self, raw: &Dataset) -> Result<Vec<usize>> {
        let pick: Box<dyn Fn(&PatientCase) -> f64> = if self.key == "label" {
            Box::new(|c| f64::from(c.label))
        } else {
            let s = raw
                .baseline_names
                .iter()
                .position(|n| *n == self.key)
                .ok_or_else(|| Error::UnknownFeature(self.key.clone()))?;
            Box::new(move |c| c.baseline[s])
        };
        Ok((0..raw.len())
            .filter(|&i| pick(&raw.cases[i]) == self.value)
            .collect())
    }
}

/// Row and column names of the self-attention grids: features, then the baseline.
pub fn position_names(model: &TrainedModel) -> Vec<String> {
    model
        .feature_names
        .iter()
        .cloned()
        .chain(std::iter::once(BASELINE_POSITION.to_string()))
        .collect()
}

pub fn decay_table(model: &TrainedModel) -> Vec<(String, f64)> {
    model
        .feature_names
        .iter()
        .cloned()
        .zip(model.net.decay_rates(&model.params))
        .collect()
}

/// Per-head self-attention averaged over the selected cases: `[head][query][key]`.
pub fn mean_self_attention(
    model: &TrainedModel,
    prepared: &Dataset,
    indices: &[usize],
) -> Result<Vec<Vec<Vec<f64>>>> {
    if indices.is_empty() {
        return Err(Error::EmptySelection("no cases to average attention over".into()));
    }
    let p = model.net.config.n_features + 1;
    let mut sum = vec![vec![vec![0.0; p]; p]; model.net.config.heads];
    for &i in indices {
        let trace = model.net.trace(&model.params, &prepared.cases[i]);
        for (acc, head) in sum.iter_mut().zip(&trace.self_attention) {
            for (acc_row, row) in acc.iter_mut().zip(head) {
                for (a, w) in acc_row.iter_mut().zip(row) {
                    *a += w;
                }
            }
        }
    }
    let n = indices.len() as f64;
    for v in sum.iter_mut().flatten().flatten() {
        *v /= n;
    }
    Ok(sum)
}

pub fn write_decay_csv<W: Write>(rows: &[(String, f64)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["feature", "decay_rate"])?;
    for (name, beta) in rows {
        w.write_record([name.clone(), beta.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Writes one square grid with a `query` column followed by one column per key.
pub fn write_grid_csv<W: Write>(names: &[String], grid: &[Vec<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(std::iter::once("query").chain(names.iter().map(String::as_str)))?;
    for (name, row) in names.iter().zip(grid) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(f64::to_string)))?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Final-attention weights per case, one row per case id.
pub fn write_final_attention_csv<W: Write>(
    model: &TrainedModel,
    prepared: &Dataset,
    indices: &[usize],
    out: W,
) -> Result<()> {
    let names = position_names(model);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(
        ["id", "risk"]
            .into_iter()
            .chain(names.iter().map(String::as_str)),
    )?;
    for &i in indices {
        let case = &prepared.cases[i];
        let pred = model.net.predict(&model.params, case);
        let row = [case.id.clone(), pred.y_hat.to_string()]
            .into_iter()
            .chain(pred.final_alphas.iter().map(f64::to_string));
        w.write_record(row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Files written by [`export`].
#[derive(Clone, Debug, Default)]
pub struct InspectOutputs {
    pub decay: PathBuf,
    pub heads: Vec<PathBuf>,
    pub final_attention: Option<PathBuf>,
    pub n_selected: usize,
}

/// Writes `decay_rates.csv`, `attention_head{m}.csv` and optionally `final_attention.csv`.
pub fn export(
    model: &TrainedModel,
    raw: &Dataset,
    filter: Option<&CaseFilter>,
    per_patient: bool,
    dir: &Path,
) -> Result<InspectOutputs> {
    let prepared = model.prepare(raw)?;
    let indices = match filter {
        Some(f) => f.select(raw)?,
        None => (0..raw.len()).collect(),
    };
    if indices.is_empty() {
        return Err(Error::EmptySelection(format!(
            "filter {} matches no cases",
            filter.map_or("<none>".into(), |f| format!("{}={}", f.key, f.value))
        )));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let create = |name: &str| -> Result<(PathBuf, fs::File)> {
        let path = dir.join(name);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        Ok((path, file))
    };

    let mut outputs = InspectOutputs {
        n_selected: indices.len(),
        ..InspectOutputs::default()
    };
    let (path, file) = create("decay_rates.csv")?;
    write_decay_csv(&decay_table(model), file)?;
    outputs.decay = path;

    let names = position_names(model);
    for (m, grid) in mean_self_attention(model, &prepared, &indices)?.iter().enumerate() {
        let (path, file) = create(&format!("attention_head{m}.csv"))?;
        write_grid_csv(&names, grid, file)?;
        outputs.heads.push(path);
    }
    if per_patient {
        let (path, file) = create("final_attention.csv")?;
        write_final_attention_csv(model, &prepared, &indices, file)?;
        outputs.final_attention = Some(path);
    }
    Ok(outputs)
}

//! Report files. Every float is written in shortest round-trip form.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use flexw_core::datagen::LabeledDataset;
use flexw_core::trainer::TrainReport;
use serde::Serialize;

pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

/// Writes files under one output directory and remembers their relative
/// paths in creation order.
pub struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> anyhow::Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn target(&mut self, rel: &str) -> anyhow::Result<PathBuf> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).with_context(|| format!("cannot create {}", parent.display()))?;
        }
        self.written.push(rel.to_string());
        Ok(path)
    }

    pub fn json<T: Serialize>(&mut self, rel: &str, value: &T) -> anyhow::Result<()> {
        let path = self.target(rel)?;
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
    }

    pub fn csv(&mut self, rel: &str, header: &[String], rows: &[Vec<String>]) -> anyhow::Result<()> {
        let path = self.target(rel)?;
        let mut w = csv::Writer::from_path(&path).with_context(|| format!("cannot write {}", path.display()))?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn into_written(self) -> Vec<String> {
        self.written
    }
}

pub fn header(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Columns `f0..f{D-1}, label, clean_label`.
pub fn dataset_table(data: &LabeledDataset) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head: Vec<String> = (0..data.dims).map(|j| format!("f{j}")).collect();
    head.push("label".into());
    head.push("clean_label".into());
    let rows = (0..data.len())
        .map(|i| {
            let mut r: Vec<String> = data.row(i).iter().map(|v| num(*v)).collect();
            r.push(data.labels[i].to_string());
            let clean = data.clean_labels.as_ref().map_or(data.labels[i], |c| c[i]);
            r.push(clean.to_string());
            r
        })
        .collect();
    (head, rows)
}

/// One row per epoch; per-class columns follow the scalar ones.
pub fn epoch_table(report: &TrainReport, classes: usize) -> (Vec<String>, Vec<Vec<String>>) {
    let mut head = header(&[
        "epoch",
        "lr",
        "mode",
        "train_accuracy",
        "test_accuracy",
        "mean_loss",
        "mean_loss_clean",
        "mean_loss_noisy",
        "mean_difficulty",
    ]);
    head.extend((0..classes).map(|c| format!("weight_c{c}")));
    head.extend((0..classes).map(|c| format!("test_accuracy_c{c}")));
    let rows = report
        .epochs
        .iter()
        .map(|e| {
            let mut r = vec![
                e.epoch.to_string(),
                num(e.lr),
                e.mode.map(|m| m.as_str().to_string()).unwrap_or_default(),
                num(e.train_accuracy),
                opt_num(e.test_accuracy),
                num(e.mean_loss),
                opt_num(e.mean_loss_clean),
                opt_num(e.mean_loss_noisy),
                num(e.mean_difficulty),
            ];
            r.extend((0..classes).map(|c| opt_num(e.mean_weight_per_class.get(c).copied().flatten())));
            r.extend((0..classes).map(|c| opt_num(e.per_class_test_accuracy.get(c).copied().flatten())));
            r
        })
        .collect();
    (head, rows)
}

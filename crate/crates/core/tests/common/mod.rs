#![allow(dead_code)]

use svi_core::cli::config::TeacherSpec;
use svi_core::cli::commands::teacher_data;
use svi_core::{RegressionDataset, TeacherNetwork, TrainConfig};

/// Desk-scale teacher experiment: 8-4-4-1 teacher, half the edges zeroed,
/// unit noise, 2000 training rows.
pub fn desk_teacher() -> TeacherSpec {
    TeacherSpec {
        input_dim: 8,
        widths: vec![4, 4],
        weight_low: 0.5,
        weight_high: 1.5,
        zero_rate: 0.5,
        n_train: 2000,
        n_test: 1000,
        sigma_eps: 1.0,
    }
}

pub fn desk_data(seed: u64) -> (TeacherNetwork, RegressionDataset, RegressionDataset) {
    teacher_data(seed, &desk_teacher()).expect("teacher data")
}

pub fn desk_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 2000,
        seed,
        ..TrainConfig::default()
    }
}

/// Config file text for the desk experiment, relative to `dir`.
pub fn desk_config_json(dir: &std::path::Path) -> String {
    let d = dir.display();
    format!(
        r#"{{
  "teacher": {{"input_dim": 8, "widths": [4, 4], "n_train": 2000, "n_test": 1000, "sigma_eps": 1.0}},
  "data": {{"train": "{d}/train.csv", "test": "{d}/test.csv", "teacher": "{d}/teacher.json"}},
  "train": {{"epochs": 2000}},
  "candidates": [[2, 2], [4, 4], [8, 8], [16, 16]]
}}"#
    )
}

//! Drive the `cidg` binary against toy data in a scratch directory.

#![allow(dead_code)]

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use cidg_core::pipeline::RunConfig;
use cidg_core::synthetic::write_toy_data;

pub const MODES: [&str; 5] = ["none", "fixed", "generated-naive", "generated-iterative", "oracle"];

/// A model small enough for a full pipeline run in well under a second.
pub fn tiny_config() -> RunConfig {
    RunConfig {
        d_model: 16,
        n_heads: 2,
        n_enc_layers: 1,
        n_dec_layers: 1,
        d_ff: 32,
        max_positions: 128,
        max_src_len: 64,
        max_len: 16,
        epochs: 3,
        batch_size: 4,
        learning_rate: 1e-3,
        ..RunConfig::default()
    }
}

pub struct Workspace {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Workspace {
    /// Toy data plus `cfg` written as `run.toml`.
    pub fn new(cfg: &RunConfig, train: usize, test: usize, triplets: usize, data_seed: u64) -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        write_toy_data(dir.path(), train, test, triplets, data_seed).expect("toy data");
        let config = dir.path().join("run.toml");
        std::fs::write(&config, cfg.to_toml()).expect("config");
        Self { dir, config }
    }

    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn file(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    pub fn read(&self, name: &str) -> Vec<u8> {
        std::fs::read(self.file(name)).unwrap_or_else(|e| panic!("reading {name}: {e}"))
    }

    /// Run `cidg --config <config> --data-dir <dir> <args>`.
    pub fn run(&self, config: &Path, args: &[&str], stdin: Option<&str>) -> Output {
        let mut child = Command::new(env!("CARGO_BIN_EXE_cidg"))
            .arg("--config")
            .arg(config)
            .arg("--data-dir")
            .arg(self.path())
            .args(args)
            .env("RUST_LOG", "warn")
            .env_remove("RUST_BACKTRACE")
            .env_remove("RUST_LIB_BACKTRACE")
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .expect("spawn cidg");
        let mut pipe = child.stdin.take().expect("stdin");
        if let Some(text) = stdin {
            pipe.write_all(text.as_bytes()).expect("write stdin");
        }
        drop(pipe);
        child.wait_with_output().expect("cidg output")
    }

    /// [`Workspace::run`] with `run.toml`.
    pub fn cidg(&self, args: &[&str], stdin: Option<&str>) -> Output {
        self.run(&self.config, args, stdin)
    }

    /// Run under `config`, panicking with stderr on failure.
    pub fn ok_with(&self, config: &Path, args: &[&str]) -> String {
        let out = self.run(config, args, None);
        assert!(out.status.success(), "cidg {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).expect("utf-8 stdout")
    }

    pub fn ok(&self, args: &[&str]) -> String {
        self.ok_with(&self.config, args)
    }

    /// Write a variant of `run.toml` under `name`.
    pub fn variant(&self, name: &str, edit: impl FnOnce(&mut RunConfig)) -> PathBuf {
        let mut cfg = RunConfig::load(&self.config).expect("config");
        edit(&mut cfg);
        let path = self.file(name);
        std::fs::write(&path, cfg.to_toml()).expect("config");
        path
    }

    /// train-instgen, label, then train-dialog twice: the multi-task model
    /// (`dialog.ckpt`) and the response-only model (`dialog-none.ckpt`).
    pub fn train_all(&self) {
        self.ok(&["train-instgen"]);
        self.ok(&["label"]);
        self.ok(&["--mode", "generated-iterative", "train-dialog"]);
        let none = self.variant("run-none.toml", |c| c.dialog_checkpoint = "dialog-none.ckpt".into());
        self.ok_with(&none, &["--mode", "none", "train-dialog"]);
    }

    /// Generate and evaluate under `mode`, keeping `generations-<mode>.jsonl`
    /// and `report-<mode>.json`. Returns the eval output.
    pub fn generate_and_eval(&self, mode: &str) -> String {
        let path = self.variant(&format!("run-{mode}.toml"), |c| {
            if mode == "none" {
                c.dialog_checkpoint = "dialog-none.ckpt".into();
            }
            c.generations = format!("generations-{mode}.jsonl").into();
            c.report = format!("report-{mode}.json").into();
        });
        self.ok_with(&path, &["--mode", mode, "generate"]);
        self.ok_with(&path, &["--mode", mode, "eval"])
    }
}

/// Every JSON line of a JSONL file.
pub fn jsonl(bytes: &[u8]) -> Vec<serde_json::Value> {
    std::str::from_utf8(bytes).expect("utf-8").lines().map(|l| serde_json::from_str(l).expect("json line")).collect()
}

/// `(dialogue_id, turn_index)` of every record.
pub fn ids(records: &[serde_json::Value]) -> Vec<(String, u64)> {
    records
        .iter()
        .map(|r| (r["dialogue_id"].as_str().unwrap().to_string(), r["turn_index"].as_u64().unwrap()))
        .collect()
}

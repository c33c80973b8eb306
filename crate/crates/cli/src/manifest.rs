use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

/// Record of one CLI invocation, written as JSON to stderr.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub params: BTreeMap<String, Value>,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub timings: Vec<Stage>,
    #[serde(skip)]
    clock: Option<(String, Instant)>,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            params: BTreeMap::new(),
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
            clock: None,
        }
    }

    pub fn param(&mut self, key: &str, value: impl Into<Value>) {
        self.params.insert(key.to_string(), value.into());
    }

    pub fn input(&mut self, path: &str) {
        self.inputs.push(path.to_string());
    }

    pub fn output(&mut self, path: &str) {
        self.outputs.push(path.to_string());
    }

    /// Closes the running stage, if any, and starts timing `name`.
    pub fn stage(&mut self, name: &str) {
        self.finish_stage();
        self.clock = Some((name.to_string(), Instant::now()));
    }

    pub fn finish_stage(&mut self) {
        if let Some((name, start)) = self.clock.take() {
            self.timings.push(Stage {
                name,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }

    pub fn emit(mut self) {
        self.finish_stage();
        match serde_json::to_string(&self) {
            Ok(json) => eprintln!("{json}"),
            Err(e) => eprintln!("manifest: {e}"),
        }
    }
}

//! Shared fixtures: a tiny PNG, scripted mock backends, and a ready
//! pipeline wired to them.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use argus_core::clock::SharedClock;
use argus_core::gateway::{BackendConfig, Gateway};
use argus_core::orchestrator::{ContextPolicy, InquirerMode, Pipeline, PipelineConfig};
use argus_core::prompts::PromptRegistry;
use argus_core::task::{ImageRef, VqaTask};

/// 1x1 black PNG.
pub const TINY_PNG: [u8; 67] = [
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48, 0x44,
    0x52, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x00, 0x00, 0x00, 0x00, 0x3a,
    0x7e, 0x9b, 0x55, 0x00, 0x00, 0x00, 0x0a, 0x49, 0x44, 0x41, 0x54, 0x78, 0x9c, 0x63, 0x62,
    0x00, 0x00, 0x00, 0x06, 0x00, 0x03, 0x36, 0x37, 0x7c, 0xa8, 0x00, 0x00, 0x00, 0x00, 0x49,
    0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82,
];

pub const CAPTION: &str = "An aerial view of an airport with runways and taxiways.";
pub const DRAFT: &str =
    "1. The airport has two runways. 2. I may have missed taxiways. 3. How many taxiways are visible?";
pub const REVISION_1: &str = "1. Two runways and three taxiways [1]. 2. Aircraft count unknown. 3. How many aircraft are parked?\n\nReferences:\n- [1] three taxiways visible";
pub const REVISION_2: &str = "1. Two runways, three taxiways, five aircraft [1]. 2. Terminal unverified. 3. Is a terminal building visible?\n\nReferences:\n- [1] five aircraft parked";
pub const REVISION_3: &str = "1. Two runways, three taxiways, five aircraft, one terminal [1]. 2. Nothing left unchecked. 3. Are any helicopters present?\n\nReferences:\n- [1] one terminal building";
pub const FINAL_ANSWER: &str = "The airport has two runways.";

pub const QUESTION_1: &str = "How many taxiways are visible?";
pub const QUESTION_2: &str = "How many aircraft are parked?";
pub const QUESTION_3: &str = "Is a terminal building visible?";

pub fn write_script(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(format!("{name}.json"));
    std::fs::write(&path, json).unwrap();
    path
}

pub fn backbone_script_json() -> String {
    serde_json::json!({
        "roles": {
            "drafter": [DRAFT],
            "revisor": [REVISION_1, REVISION_2, REVISION_3],
            "spokesman": [FINAL_ANSWER],
        }
    })
    .to_string()
}

pub fn captioner_script_json() -> String {
    serde_json::json!({"roles": {"captioner": [CAPTION]}}).to_string()
}

pub fn vision_script_json(backend_tag: &str) -> String {
    serde_json::json!({
        "roles": {
            "vision": {
                "by_question": {
                    QUESTION_1: format!("{backend_tag}: three taxiways."),
                    QUESTION_2: format!("{backend_tag}: five aircraft."),
                    QUESTION_3: format!("{backend_tag}: one terminal."),
                },
                "default": format!("{backend_tag}: nothing new."),
            }
        }
    })
    .to_string()
}

pub struct MockWorld {
    pub dir: tempfile::TempDir,
    pub registry: Arc<PromptRegistry>,
    pub gateway: Arc<Gateway>,
    pub pipeline: Pipeline,
    pub image_path: PathBuf,
}

impl MockWorld {
    pub fn task(&self, question: &str) -> VqaTask {
        VqaTask::new(
            "task-1",
            ImageRef::from_path(&self.image_path).unwrap(),
            question,
        )
        .unwrap()
    }
}

pub struct WorldBuilder {
    suite_n: usize,
    iterations: u32,
    context_policy: ContextPolicy,
    inquirer_mode: InquirerMode,
    call_logging: bool,
    backbone_json: Option<String>,
    vision_jsons: Option<Vec<String>>,
}

impl WorldBuilder {
    pub fn new(suite_n: usize, iterations: u32) -> Self {
        Self {
            suite_n,
            iterations,
            context_policy: ContextPolicy::FullTranscript,
            inquirer_mode: InquirerMode::PureExtraction,
            call_logging: false,
            backbone_json: None,
            vision_jsons: None,
        }
    }

    pub fn context_policy(mut self, policy: ContextPolicy) -> Self {
        self.context_policy = policy;
        self
    }

    pub fn inquirer_mode(mut self, mode: InquirerMode) -> Self {
        self.inquirer_mode = mode;
        self
    }

    pub fn call_logging(mut self) -> Self {
        self.call_logging = true;
        self
    }

    pub fn backbone_json(mut self, json: String) -> Self {
        self.backbone_json = Some(json);
        self
    }

    pub fn vision_jsons(mut self, jsons: Vec<String>) -> Self {
        self.vision_jsons = Some(jsons);
        self
    }

    pub fn build(self, clock: SharedClock) -> MockWorld {
        let dir = tempfile::tempdir().unwrap();
        let image_path = dir.path().join("scene.png");
        std::fs::write(&image_path, TINY_PNG).unwrap();

        let backbone_path = write_script(
            dir.path(),
            "backbone",
            &self.backbone_json.unwrap_or_else(backbone_script_json),
        );
        let captioner_path = write_script(dir.path(), "captioner", &captioner_script_json());
        let vision_jsons = self.vision_jsons.unwrap_or_else(|| {
            (1..=self.suite_n)
                .map(|i| vision_script_json(&format!("v{i}")))
                .collect()
        });
        assert_eq!(vision_jsons.len(), self.suite_n);
        let suite: Vec<BackendConfig> = vision_jsons
            .iter()
            .enumerate()
            .map(|(i, json)| {
                let path = write_script(dir.path(), &format!("vision{}", i + 1), json);
                BackendConfig::mock_from_script(format!("v{}", i + 1), path).unwrap()
            })
            .collect();

        let cfg = PipelineConfig {
            backbone: BackendConfig::mock_from_script("backbone", backbone_path).unwrap(),
            captioner: BackendConfig::mock_from_script("captioner", captioner_path).unwrap(),
            suite,
            judge: None,
            iterations: self.iterations,
            context_policy: self.context_policy,
            inquirer_mode: self.inquirer_mode,
        };
        let registry = Arc::new(PromptRegistry::load_default().unwrap());
        let mut gateway = Gateway::new(clock);
        if self.call_logging {
            gateway = gateway.with_call_logging();
        }
        let gateway = Arc::new(gateway);
        let pipeline = Pipeline::new(cfg, registry.clone(), gateway.clone()).unwrap();
        MockWorld {
            dir,
            registry,
            gateway,
            pipeline,
            image_path,
        }
    }
}

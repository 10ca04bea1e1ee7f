//! Task and image reference types.

use std::fmt;
use std::path::{Path, PathBuf};

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("question must be non-empty")]
    EmptyQuestion,
    #[error("unsupported image format {0:?} (expected png, jpeg, webp or bmp)")]
    UnsupportedMediaType(String),
    #[error("failed to read image {path}: {source}")]
    ImageRead {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Image format label. Only formats the vision endpoints accept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MediaType {
    Png,
    Jpeg,
    Webp,
    Bmp,
}

impl MediaType {
    pub fn from_extension(path: &Path) -> Result<Self, TaskError> {
        let ext = path
            .extension()
            .map(|e| e.to_string_lossy().to_ascii_lowercase())
            .unwrap_or_default();
        match ext.as_str() {
            "png" => Ok(Self::Png),
            "jpg" | "jpeg" => Ok(Self::Jpeg),
            "webp" => Ok(Self::Webp),
            "bmp" => Ok(Self::Bmp),
            other => Err(TaskError::UnsupportedMediaType(other.to_string())),
        }
    }

    pub fn mime(&self) -> &'static str {
        match self {
            Self::Png => "image/png",
            Self::Jpeg => "image/jpeg",
            Self::Webp => "image/webp",
            Self::Bmp => "image/bmp",
        }
    }
}

impl fmt::Display for MediaType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Png => "png",
            Self::Jpeg => "jpeg",
            Self::Webp => "webp",
            Self::Bmp => "bmp",
        })
    }
}

/// Where the image payload lives. Exactly one of path/bytes by construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageSource {
    Path(PathBuf),
    Bytes(Vec<u8>),
}

/// Reference to one image attachment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRef {
    source: ImageSource,
    media_type: MediaType,
}

impl ImageRef {
    pub fn from_path(path: impl Into<PathBuf>) -> Result<Self, TaskError> {
        let path = path.into();
        let media_type = MediaType::from_extension(&path)?;
        Ok(Self {
            source: ImageSource::Path(path),
            media_type,
        })
    }

    pub fn from_bytes(bytes: Vec<u8>, media_type: MediaType) -> Self {
        Self {
            source: ImageSource::Bytes(bytes),
            media_type,
        }
    }

    pub fn media_type(&self) -> MediaType {
        self.media_type
    }

    pub fn source(&self) -> &ImageSource {
        &self.source
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.source {
            ImageSource::Path(p) => Some(p),
            ImageSource::Bytes(_) => None,
        }
    }

    /// Reads the raw payload. Path-backed refs hit the filesystem here.
    pub fn load_bytes(&self) -> Result<Vec<u8>, TaskError> {
        match &self.source {
            ImageSource::Path(p) => std::fs::read(p).map_err(|source| TaskError::ImageRead {
                path: p.clone(),
                source,
            }),
            ImageSource::Bytes(b) => Ok(b.clone()),
        }
    }

    /// `data:<mime>;base64,<payload>` content part for the wire protocol.
    pub fn to_data_url(&self) -> Result<String, TaskError> {
        let bytes = self.load_bytes()?;
        let b64 = base64::engine::general_purpose::STANDARD.encode(bytes);
        Ok(format!("data:{};base64,{}", self.media_type.mime(), b64))
    }
}

/// One visual question answering task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VqaTask {
    pub task_id: String,
    pub image: ImageRef,
    pub question: String,
    pub question_type: Option<String>,
    pub ground_truth: Option<String>,
}

impl VqaTask {
    pub fn new(
        task_id: impl Into<String>,
        image: ImageRef,
        question: impl Into<String>,
    ) -> Result<Self, TaskError> {
        let question = question.into();
        if question.trim().is_empty() {
            return Err(TaskError::EmptyQuestion);
        }
        Ok(Self {
            task_id: task_id.into(),
            image,
            question,
            question_type: None,
            ground_truth: None,
        })
    }

    pub fn with_question_type(mut self, question_type: impl Into<String>) -> Self {
        self.question_type = Some(question_type.into());
        self
    }

    pub fn with_ground_truth(mut self, ground_truth: impl Into<String>) -> Self {
        self.ground_truth = Some(ground_truth.into());
        self
    }
}

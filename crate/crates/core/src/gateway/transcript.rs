use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CompletionRequest;

/// Content key over the fields that determine a completion. The request tag
/// is deliberately left out so that relabelled runs still hit the store.
pub fn transcript_key(request: &CompletionRequest) -> String {
    #[derive(Serialize)]
    struct KeyFields<'a> {
        v: u32,
        prompt: &'a str,
        model_id: &'a str,
        temperature: f64,
        max_output_tokens: u32,
    }
    // -0.0 and 0.0 must hash the same
    let temperature = if request.temperature == 0.0 {
        0.0
    } else {
        request.temperature
    };
    let fields = KeyFields {
        v: 1,
        prompt: &request.prompt,
        model_id: &request.model_id,
        temperature,
        max_output_tokens: request.max_output_tokens,
    };
    let bytes = serde_json::to_vec(&fields).expect("key fields serialize");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedRequest {
    pub request_tag: String,
    pub model_id: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub text: String,
    #[serde(default)]
    pub truncated: bool,
}

/// One request/response pair as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub key: String,
    pub request: RecordedRequest,
    pub response: RecordedResponse,
}

impl Transcript {
    pub fn new(request: &CompletionRequest, text: impl Into<String>, truncated: bool) -> Self {
        Transcript {
            key: transcript_key(request),
            request: RecordedRequest {
                request_tag: request.request_tag.clone(),
                model_id: request.model_id.clone(),
                temperature: request.temperature,
                max_output_tokens: request.max_output_tokens,
                prompt: request.prompt.clone(),
            },
            response: RecordedResponse {
                text: text.into(),
                truncated,
            },
        }
    }
}

/// Directory of `<key>.json` files, one per request hash.
#[derive(Debug)]
pub struct TranscriptStore {
    dir: PathBuf,
    write_lock: Mutex<()>,
}

impl TranscriptStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(TranscriptStore {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    /// Opens an existing store without creating it.
    pub fn open_existing(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(io::Error::new(
                io::ErrorKind::NotFound,
                format!("transcript store {} does not exist", dir.display()),
            ));
        }
        Ok(TranscriptStore {
            dir,
            write_lock: Mutex::new(()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn load(&self, key: &str) -> io::Result<Option<Transcript>> {
        let path = self.path_for(key);
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, transcript: &Transcript) -> io::Result<()> {
        let _guard = self.write_lock.lock().unwrap_or_else(|p| p.into_inner());
        let path = self.path_for(&transcript.key);
        let tmp = path.with_extension("json.tmp");
        let mut body = serde_json::to_string_pretty(transcript)?;
        body.push('\n');
        fs::write(&tmp, body)?;
        fs::rename(&tmp, &path)
    }

    /// All transcripts in the store, ordered by key.
    pub fn entries(&self) -> io::Result<Vec<Transcript>> {
        let mut paths: Vec<PathBuf> = fs::read_dir(&self.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        paths
            .iter()
            .map(|p| {
                let text = fs::read_to_string(p)?;
                serde_json::from_str(&text)
                    .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, format!("{}: {e}", p.display())))
            })
            .collect()
    }
}

//! Downloads dataset records and verifies them against the published
//! checksum list and their own EDF headers.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Duration;

use eegfist::edf::{resolve_subset, RecordHeader, RecordId, SubsetSpec};
use eegfist::pipeline::{sha256_hex, write_atomic};

pub const DATASET_URL: &str = "https://physionet.org/files/eegmmidb/1.0.0/";
pub const CHECKSUM_FILE: &str = "SHA256SUMS.txt";
const ATTEMPTS: usize = 3;

#[derive(Debug)]
pub enum FetchError {
    /// Transient transport failure; running the command again may succeed.
    Network { url: String, message: String },
    /// The server answered, but not with the file asked for.
    NotFound { url: String, status: u16 },
    /// A downloaded or existing file fails its checksum or size check.
    Integrity { path: PathBuf, message: String },
    /// The destination cannot be written.
    Destination { path: PathBuf, message: String },
    Subset(String),
}

impl FetchError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, FetchError::Network { .. })
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            FetchError::Destination { .. } | FetchError::Subset(_) => 2,
            _ => 3,
        }
    }
}

impl fmt::Display for FetchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FetchError::Network { url, message } => write!(f, "network error fetching {url} (retryable): {message}"),
            FetchError::NotFound { url, status } => write!(f, "{url} answered HTTP {status}"),
            FetchError::Integrity { path, message } => write!(f, "integrity error for {}: {message}", path.display()),
            FetchError::Destination { path, message } => {
                write!(f, "destination {} is not writable: {message}", path.display())
            }
            FetchError::Subset(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for FetchError {}

/// Something that can GET a URL. Swapped out in tests.
pub trait Transport {
    fn get(&self, url: &str) -> Result<Vec<u8>, FetchError>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl Default for HttpTransport {
    fn default() -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<Vec<u8>, FetchError> {
        let network = |e: ureq::Error| FetchError::Network {
            url: url.to_string(),
            message: e.to_string(),
        };
        match self.agent.get(url).call() {
            Ok(mut resp) => resp
                .body_mut()
                .with_config()
                .limit(256 * 1024 * 1024)
                .read_to_vec()
                .map_err(network),
            Err(ureq::Error::StatusCode(status)) if status < 500 => Err(FetchError::NotFound {
                url: url.to_string(),
                status,
            }),
            Err(e) => Err(network(e)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FileStatus {
    Downloaded,
    /// Already present and verified; nothing was transferred.
    Verified,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchedFile {
    pub record: RecordId,
    pub path: PathBuf,
    pub status: FileStatus,
}

/// Paths in the checksum list are relative to the dataset root.
pub fn parse_checksums(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|line| {
            let mut parts = line.split_whitespace();
            let hash = parts.next()?;
            let name = parts.next()?.trim_start_matches('*').trim_start_matches("./");
            (hash.len() == 64).then(|| (name.to_string(), hash.to_ascii_lowercase()))
        })
        .collect()
}

/// The file size an EDF header implies.
pub fn header_size(bytes: &[u8]) -> Result<usize, String> {
    let header = RecordHeader::parse(bytes).map_err(|e| e.to_string())?;
    Ok(header.header_bytes + header.n_data_records * header.record_bytes())
}

fn verify(path: &Path, name: &str, bytes: &[u8], sums: Option<&BTreeMap<String, String>>) -> Result<(), FetchError> {
    let bad = |message: String| FetchError::Integrity {
        path: path.to_path_buf(),
        message,
    };
    let expected = header_size(bytes).map_err(|m| bad(format!("unreadable header: {m}")))?;
    if expected != bytes.len() {
        return Err(bad(format!("header implies {expected} bytes, file has {}", bytes.len())));
    }
    if let Some(sums) = sums {
        match sums.get(name) {
            Some(want) => {
                let got = sha256_hex(bytes);
                if &got != want {
                    return Err(bad(format!("sha256 {got} does not match published {want}")));
                }
            }
            None => return Err(bad(format!("{name} is not in {CHECKSUM_FILE}"))),
        }
    }
    Ok(())
}

fn check_writable(dest: &Path) -> Result<(), FetchError> {
    let fail = |e: std::io::Error| FetchError::Destination {
        path: dest.to_path_buf(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dest).map_err(fail)?;
    let probe = dest.join(format!(".eegfist-write-probe.{}", std::process::id()));
    std::fs::write(&probe, b"").map_err(fail)?;
    std::fs::remove_file(&probe).map_err(fail)
}

fn get_with_retry(transport: &dyn Transport, url: &str) -> Result<Vec<u8>, FetchError> {
    let mut last = None;
    for attempt in 1..=ATTEMPTS {
        match transport.get(url) {
            Ok(bytes) => return Ok(bytes),
            Err(e) if e.is_retryable() => {
                log::warn!("attempt {attempt}/{ATTEMPTS}: {e}");
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.expect("at least one attempt"))
}

fn url_path(id: &RecordId) -> String {
    id.relative_path()
        .components()
        .map(|c| c.as_os_str().to_string_lossy().into_owned())
        .collect::<Vec<_>>()
        .join("/")
}

/// Makes every record of `subset` present and verified below `dest`.
///
/// Existing files that pass verification are left alone, so a second call
/// transfers nothing. The checksum list is downloaded on the first miss and
/// kept beside the records.
pub fn fetch(
    subset: &SubsetSpec,
    dest: &Path,
    base_url: &str,
    transport: &dyn Transport,
) -> Result<Vec<FetchedFile>, FetchError> {
    let ids = resolve_subset(subset).map_err(|e| FetchError::Subset(e.to_string()))?;
    check_writable(dest)?;
    let base = if base_url.ends_with('/') {
        base_url.to_string()
    } else {
        format!("{base_url}/")
    };
    let sums_path = dest.join(CHECKSUM_FILE);
    let mut sums = std::fs::read_to_string(&sums_path).ok().map(|t| parse_checksums(&t));

    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let name = url_path(&id);
        let path = dest.join(id.relative_path());
        if let Ok(bytes) = std::fs::read(&path) {
            match verify(&path, &name, &bytes, sums.as_ref()) {
                Ok(()) => {
                    out.push(FetchedFile {
                        record: id,
                        path,
                        status: FileStatus::Verified,
                    });
                    continue;
                }
                Err(e) => log::warn!("{e}; downloading again"),
            }
        }
        if sums.is_none() {
            let text = get_with_retry(transport, &format!("{base}{CHECKSUM_FILE}"))?;
            write_atomic(&sums_path, &text).map_err(|e| FetchError::Destination {
                path: sums_path.clone(),
                message: e.to_string(),
            })?;
            sums = Some(parse_checksums(&String::from_utf8_lossy(&text)));
        }
        let url = format!("{base}{name}");
        log::info!("downloading {url}");
        let bytes = get_with_retry(transport, &url)?;
        verify(&path, &name, &bytes, sums.as_ref())?;
        write_atomic(&path, &bytes).map_err(|e| FetchError::Destination {
            path: path.clone(),
            message: e.to_string(),
        })?;
        out.push(FetchedFile {
            record: id,
            path,
            status: FileStatus::Downloaded,
        });
    }
    Ok(out)
}

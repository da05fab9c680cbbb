//! Reading per-app feature files and dataset manifests.
//!
//! Feature files hold one `kind::value` pair per line. URL features are
//! resolved to IPv4 addresses through an offline [`IpResolverMap`]; URLs the
//! map does not know are dropped. Every address is then truncated to its /24
//! prefix (`a.b.c.x`), which becomes the feature name.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::net::Ipv4Addr;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{AppSample, Feature, FeatureKind, FeatureSpace, PuDataset, SparseBinaryVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RawKind {
    Permission,
    Api,
    Url,
    Ip,
}

impl FromStr for RawKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "permission" => Ok(RawKind::Permission),
            "api" => Ok(RawKind::Api),
            "url" => Ok(RawKind::Url),
            "ip" => Ok(RawKind::Ip),
            other => Err(format!("unknown feature kind `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawFeatureLine {
    pub kind: RawKind,
    pub value: String,
}

impl RawFeatureLine {
    pub fn new(kind: RawKind, value: impl Into<String>) -> Self {
        RawFeatureLine { kind, value: value.into() }
    }
}

/// Parses a feature file. Blank lines and `#` comments are skipped, and
/// repeated lines collapse to their first occurrence.
pub fn parse_feature_file(text: &str) -> Result<Vec<RawFeatureLine>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (tag, value) = trimmed.split_once("::").ok_or_else(|| Error::Parse {
            line: line_no,
            message: "expected `kind::value`".into(),
        })?;
        let (tag, value) = (tag.trim(), value.trim());
        if tag.is_empty() || value.is_empty() {
            return Err(Error::Parse { line: line_no, message: "empty kind or value".into() });
        }
        let kind = tag.parse::<RawKind>().map_err(|message| Error::Parse { line: line_no, message })?;
        let raw = RawFeatureLine::new(kind, value);
        if seen.insert(raw.clone()) {
            out.push(raw);
        }
    }
    Ok(out)
}

/// Offline replacement for DNS: normalized host to IPv4 address.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IpResolverMap {
    entries: BTreeMap<String, Ipv4Addr>,
}

impl IpResolverMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, host: &str, ip: &str) -> Result<()> {
        let addr = parse_ipv4(ip)?;
        self.entries.insert(normalize_host(host), addr);
        Ok(())
    }

    /// Two tab-separated columns (`host`, `ip`), no header.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut map = IpResolverMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (host, ip) = line.split_once('\t').ok_or_else(|| Error::Parse {
                line: n + 1,
                message: "expected `host<TAB>ip`".into(),
            })?;
            map.insert(host.trim(), ip.trim()).map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
        }
        Ok(map)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&text)
    }

    pub fn resolve(&self, url: &str) -> Option<Ipv4Addr> {
        self.entries.get(&normalize_host(url)).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Lower-cased host part of a URL: scheme, credentials, port and path removed.
pub fn normalize_host(url: &str) -> String {
    let mut rest = url.trim();
    if let Some((_, after)) = rest.split_once("://") {
        rest = after;
    }
    let rest = rest.split(['/', '?', '#']).next().unwrap_or("");
    let rest = rest.rsplit_once('@').map_or(rest, |(_, host)| host);
    let host = rest.split(':').next().unwrap_or("");
    host.trim_end_matches('.').to_ascii_lowercase()
}

fn parse_ipv4(text: &str) -> Result<Ipv4Addr> {
    text.trim()
        .parse::<Ipv4Addr>()
        .map_err(|_| Error::Dataset(format!("malformed IPv4 address `{text}`")))
}

/// Replaces resolvable URL lines with IP lines and drops the rest.
pub fn resolve_urls(lines: &[RawFeatureLine], map: &IpResolverMap) -> Vec<RawFeatureLine> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in lines {
        let resolved = match line.kind {
            RawKind::Url => match map.resolve(&line.value) {
                Some(ip) => RawFeatureLine::new(RawKind::Ip, ip.to_string()),
                None => continue,
            },
            _ => line.clone(),
        };
        if seen.insert(resolved.clone()) {
            out.push(resolved);
        }
    }
    out
}

/// `216.59.192.44` becomes `216.59.192.x`.
pub fn truncate_ip(ip: &str) -> Result<String> {
    let [a, b, c, _] = parse_ipv4(ip)?.octets();
    Ok(format!("{a}.{b}.{c}.x"))
}

/// Turns resolved lines into space features. URL lines must already be resolved.
fn lines_to_features(lines: &[RawFeatureLine]) -> Result<BTreeSet<Feature>> {
    let mut out = BTreeSet::new();
    for line in lines {
        let feature = match line.kind {
            RawKind::Permission => Feature::new(FeatureKind::Permission, line.value.clone()),
            RawKind::Api => Feature::new(FeatureKind::Api, line.value.clone()),
            RawKind::Ip => Feature::new(FeatureKind::IpAddress, truncate_ip(&line.value)?),
            RawKind::Url => continue,
        };
        out.insert(feature);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    Positive,
    Unlabeled,
}

impl FromStr for Group {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Group::Positive),
            "unlabeled" => Ok(Group::Unlabeled),
            other => Err(Error::Manifest(format!("unknown group `{other}`"))),
        }
    }
}

impl Group {
    pub fn as_str(self) -> &'static str {
        match self {
            Group::Positive => "positive",
            Group::Unlabeled => "unlabeled",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub app_id: String,
    pub path: PathBuf,
    pub group: Group,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub rows: Vec<ManifestRow>,
}

const MANIFEST_HEADER: [&str; 3] = ["app_id", "path", "group"];

impl DatasetManifest {
    pub fn new(rows: Vec<ManifestRow>) -> Result<Self> {
        let mut ids = HashSet::new();
        for row in &rows {
            if !ids.insert(row.app_id.as_str()) {
                return Err(Error::Manifest(format!("duplicate app_id `{}`", row.app_id)));
            }
        }
        Ok(DatasetManifest { rows })
    }

    /// Parses the CSV form. Relative paths are resolved against `base_dir`.
    pub fn parse_csv(text: &str, base_dir: &Path) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::Manifest(e.to_string()))?;
        if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
            return Err(Error::Manifest(format!(
                "expected header `{}`",
                MANIFEST_HEADER.join(",")
            )));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::Manifest(e.to_string()))?;
            let (id, path, group) = (&record[0], &record[1], &record[2]);
            if id.is_empty() {
                return Err(Error::Manifest("empty app_id".into()));
            }
            let path = Path::new(path);
            rows.push(ManifestRow {
                app_id: id.to_string(),
                path: if path.is_absolute() { path.to_path_buf() } else { base_dir.join(path) },
                group: group.parse()?,
            });
        }
        Self::new(rows)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::parse_csv(&text, base)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let io_err = |e: csv::Error| Error::Serde(e.to_string());
        writer.write_record(MANIFEST_HEADER).map_err(io_err)?;
        for row in &self.rows {
            let path = row.path.to_string_lossy();
            writer.write_record([row.app_id.as_str(), &path, row.group.as_str()]).map_err(io_err)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Serde(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Reads every file named by `manifest` and vectorizes the apps.
pub fn build_dataset(manifest: &DatasetManifest, map: &IpResolverMap) -> Result<PuDataset> {
    let per_app: Vec<BTreeSet<Feature>> = manifest
        .rows
        .par_iter()
        .map(|row| {
            let text = fs::read_to_string(&row.path).map_err(|e| Error::io(&row.path, e))?;
            let lines = parse_feature_file(&text).map_err(|e| match e {
                Error::Parse { line, message } => Error::Parse {
                    line,
                    message: format!("{}: {message}", row.path.display()),
                },
                other => other,
            })?;
            lines_to_features(&resolve_urls(&lines, map))
        })
        .collect::<Result<_>>()?;

    let space = FeatureSpace::new(per_app.iter().flatten().cloned())?;
    let mut positives = Vec::new();
    let mut unlabeled = Vec::new();
    for (row, features) in manifest.rows.iter().zip(per_app) {
        let vector = SparseBinaryVector::from_indices(
            features.iter().map(|f| space.index_of(f.kind, &f.name).expect("feature in space")),
        );
        let positive = row.group == Group::Positive;
        let sample = AppSample::new(row.app_id.clone(), vector, positive, None)?;
        if positive { positives.push(sample) } else { unlabeled.push(sample) }
    }
    PuDataset::new(Arc::new(space), positives, unlabeled)
}

pub const DATASET_SCHEMA: &str = "pudroid-dataset/1";

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    schema: String,
    /// Settings that produced the file, when written by the CLI.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    config: Option<serde_json::Value>,
    features: Vec<Feature>,
    positives: Vec<AppSample>,
    unlabeled: Vec<AppSample>,
}

/// JSON form of a dataset, as written by the `ingest` subcommand.
pub fn dataset_to_json(ds: &PuDataset) -> Result<String> {
    write_dataset_file(ds, None)
}

/// Like [`dataset_to_json`], with the producing configuration embedded.
pub fn dataset_to_json_with_config(ds: &PuDataset, config: &serde_json::Value) -> Result<String> {
    write_dataset_file(ds, Some(config.clone()))
}

fn write_dataset_file(ds: &PuDataset, config: Option<serde_json::Value>) -> Result<String> {
    let file = DatasetFile {
        schema: DATASET_SCHEMA.into(),
        config,
        features: ds.space().features().to_vec(),
        positives: ds.positives().to_vec(),
        unlabeled: ds.unlabeled().to_vec(),
    };
    let mut out = serde_json::to_string_pretty(&file)?;
    out.push('\n');
    Ok(out)
}

pub fn dataset_from_json(text: &str) -> Result<PuDataset> {
    let file: DatasetFile = serde_json::from_str(text)?;
    if file.schema != DATASET_SCHEMA {
        return Err(Error::Dataset(format!("unsupported dataset schema `{}`", file.schema)));
    }
    let space = FeatureSpace::from_ordered(file.features)?;
    PuDataset::new(Arc::new(space), file.positives, file.unlabeled)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_kinds() {
        let lines = parse_feature_file("permission::android.permission.SEND_SMS\napi::sendTextMessage").unwrap();
        assert_eq!(
            lines,
            vec![
                RawFeatureLine::new(RawKind::Permission, "android.permission.SEND_SMS"),
                RawFeatureLine::new(RawKind::Api, "sendTextMessage"),
            ]
        );
    }

    #[test]
    fn duplicate_lines_collapse() {
        let lines = parse_feature_file("url::evil.example.com\nurl::evil.example.com").unwrap();
        assert_eq!(lines.len(), 1);
    }

    #[test]
    fn comments_and_blanks_skipped() {
        let lines = parse_feature_file("# header\n\n  api::a  \n").unwrap();
        assert_eq!(lines, vec![RawFeatureLine::new(RawKind::Api, "a")]);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        match parse_feature_file("garbage-line") {
            Err(Error::Parse { line: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        match parse_feature_file("api::ok\nactivity::Main") {
            Err(Error::Parse { line: 2, message }) => assert!(message.contains("activity")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn urls_resolve_or_drop() {
        let mut map = IpResolverMap::new();
        map.insert("a.com", "216.58.1.9").unwrap();
        let a = RawFeatureLine::new(RawKind::Url, "a.com");
        assert_eq!(resolve_urls(std::slice::from_ref(&a), &map), vec![RawFeatureLine::new(RawKind::Ip, "216.58.1.9")]);
        let gone = RawFeatureLine::new(RawKind::Url, "gone.com");
        assert!(resolve_urls(&[gone], &IpResolverMap::new()).is_empty());

        map.insert("b.com", "216.58.1.9").unwrap();
        let b = RawFeatureLine::new(RawKind::Url, "b.com");
        assert_eq!(resolve_urls(&[a, b], &map), vec![RawFeatureLine::new(RawKind::Ip, "216.58.1.9")]);
    }

    #[test]
    fn non_url_lines_pass_through() {
        let api = RawFeatureLine::new(RawKind::Api, "x");
        assert_eq!(resolve_urls(std::slice::from_ref(&api), &IpResolverMap::new()), vec![api]);
    }

    #[test]
    fn host_normalization() {
        assert_eq!(normalize_host("HTTPS://user@Evil.Example.com:8080/path?q"), "evil.example.com");
        assert_eq!(normalize_host("a.com"), "a.com");
    }

    #[test]
    fn truncation() {
        assert_eq!(truncate_ip("216.59.192.44").unwrap(), "216.59.192.x");
        assert_eq!(truncate_ip("0.0.0.1").unwrap(), "0.0.0.x");
        assert!(truncate_ip("300.1.1.1").is_err());
        assert!(truncate_ip("1.2.3").is_err());
    }

    #[test]
    fn resolver_tsv_validates_addresses() {
        let map = IpResolverMap::parse_tsv("a.com\t1.2.3.4\n\nb.com\t5.6.7.8\n").unwrap();
        assert_eq!(map.len(), 2);
        assert!(IpResolverMap::parse_tsv("a.com\t999.2.3.4").is_err());
        assert!(IpResolverMap::parse_tsv("a.com 1.2.3.4").is_err());
    }

    #[test]
    fn manifest_parsing() {
        let text = "app_id,path,group\na,a.txt,Positive\nb,/abs/b.txt,UNLABELED\n";
        let m = DatasetManifest::parse_csv(text, Path::new("/data")).unwrap();
        assert_eq!(m.rows[0].path, PathBuf::from("/data/a.txt"));
        assert_eq!(m.rows[1].group, Group::Unlabeled);
        assert!(DatasetManifest::parse_csv("app_id,path,group\na,x,positive\na,y,unlabeled\n", Path::new(".")).is_err());
        assert!(DatasetManifest::parse_csv("id,path,group\n", Path::new(".")).is_err());
        assert!(DatasetManifest::parse_csv("app_id,path,group\na,x,benign\n", Path::new(".")).is_err());
    }
}

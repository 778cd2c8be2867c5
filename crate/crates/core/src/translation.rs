//! Word-to-word translation tables, label-copy projection, and the cached
//! external translation client.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::{Lexicon, LexiconEntry, LexiconError, Provenance};
use crate::text::normalize_word;

/// Environment variable holding the translation service credential.
pub const TRANSLATE_KEY_ENV: &str = "LEXIFORGE_TRANSLATE_KEY";

/// Words per client request.
pub const BATCH_SIZE: usize = 128;

#[derive(Debug, Error)]
pub enum TranslationError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("no translation for `{0}`")]
    Missing(String),
    #[error("translation request failed ({message}); {} words left unfetched", remaining.len())]
    Fetch { message: String, remaining: Vec<String> },
    #[error("translation service returned an unusable answer: {0}")]
    InvalidResponse(String),
    #[error("missing credential: set {TRANSLATE_KEY_ENV}")]
    MissingKey,
    #[error(transparent)]
    Lexicon(#[from] LexiconError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TranslationError {
    /// Whether retrying the same request later can succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, TranslationError::Fetch { .. })
    }
}

/// One target string per source word. Later insertions replace earlier ones.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslationTable {
    source_lang: String,
    target_lang: String,
    map: HashMap<String, String>,
    order: Vec<String>,
}

impl TranslationTable {
    pub fn new(source_lang: impl Into<String>, target_lang: impl Into<String>) -> Self {
        Self {
            source_lang: source_lang.into(),
            target_lang: target_lang.into(),
            ..Self::default()
        }
    }

    pub fn source_lang(&self) -> &str {
        &self.source_lang
    }

    pub fn target_lang(&self) -> &str {
        &self.target_lang
    }

    pub fn insert(&mut self, source: String, target: String) {
        if self.map.insert(source.clone(), target).is_none() {
            self.order.push(source);
        }
    }

    pub fn get(&self, source: &str) -> Option<&str> {
        self.map.get(source).map(String::as_str)
    }

    pub fn contains(&self, source: &str) -> bool {
        self.map.contains_key(source)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Pairs in first-insertion order of the source word.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.order.iter().map(|s| (s.as_str(), self.map[s].as_str()))
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (s, t) in self.iter() {
            writeln!(out, "{s}\t{t}")?;
        }
        out.flush()
    }
}

/// Reads `source<TAB>target` lines (no header).
pub fn load_translation_table<R: BufRead>(
    reader: R,
    source_lang: &str,
    target_lang: &str,
) -> Result<TranslationTable, TranslationError> {
    let mut table = TranslationTable::new(source_lang, target_lang);
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.strip_suffix('\r').unwrap_or(&line);
        let (source, target) = parse_pair(line).map_err(|message| TranslationError::Parse {
            line: i + 1,
            message,
        })?;
        table.insert(source, target);
    }
    Ok(table)
}

fn parse_pair(line: &str) -> Result<(String, String), String> {
    let mut parts = line.split('\t');
    match (parts.next(), parts.next(), parts.next()) {
        (Some(s), Some(t), None) => {
            if s.trim().is_empty() || t.trim().is_empty() {
                Err("empty source or target".into())
            } else {
                Ok((normalize_word(s), normalize_word(t)))
            }
        }
        _ => Err("expected exactly one tab".into()),
    }
}

/// Reads a table file, or returns an empty table if the file does not exist.
pub fn load_table_file(
    path: &Path,
    source_lang: &str,
    target_lang: &str,
) -> Result<TranslationTable, TranslationError> {
    match File::open(path) {
        Ok(f) => load_translation_table(BufReader::new(f), source_lang, target_lang),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            Ok(TranslationTable::new(source_lang, target_lang))
        }
        Err(e) => Err(e.into()),
    }
}

/// What to do with source words the table cannot translate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MissingPolicy {
    #[default]
    Skip,
    Strict,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectionStats {
    pub projected: usize,
    pub skipped: usize,
}

/// Translates every word of `source` and copies its ratings and split tag.
///
/// The result may contain partial duplicates when several source words share
/// a translation.
pub fn project_lexicon(
    source: &Lexicon,
    table: &TranslationTable,
    policy: MissingPolicy,
) -> Result<(Lexicon, ProjectionStats), TranslationError> {
    let mut stats = ProjectionStats::default();
    let mut entries = Vec::with_capacity(source.len());
    for e in source.entries() {
        match table.get(&e.word) {
            Some(target) => {
                entries.push(LexiconEntry {
                    word: target.to_string(),
                    emotions: e.emotions.clone(),
                    split: e.split,
                    provenance: Provenance::Translated,
                });
                stats.projected += 1;
            }
            None if policy == MissingPolicy::Strict => {
                return Err(TranslationError::Missing(e.word.clone()))
            }
            None => stats.skipped += 1,
        }
    }
    if stats.skipped > 0 {
        log::warn!("{} source entries had no translation and were skipped", stats.skipped);
    }
    let lang = if table.target_lang().is_empty() { source.language() } else { table.target_lang() };
    let lex = Lexicon::new(lang, source.variables().clone(), source.scales().to_vec(), entries)?;
    Ok((lex, stats))
}

/// Identity table over the words of `lex`, used when source and target
/// language coincide.
pub fn identity_table(lex: &Lexicon) -> TranslationTable {
    let mut table = TranslationTable::new(lex.language(), lex.language());
    for w in lex.distinct_words() {
        table.insert(w.to_string(), w.to_string());
    }
    table
}

/// A batch word translation service.
pub trait TranslationClient {
    /// One target string per input word, in input order.
    fn translate(
        &self,
        words: &[String],
        source_lang: &str,
        target_lang: &str,
    ) -> Result<Vec<String>, TranslationError>;
}

/// Looks up every word missing from the cache file through `client` and
/// appends the answers to the cache, one batch at a time.
///
/// On a failed batch the words not yet fetched are returned in the error and
/// everything fetched so far stays in the cache.
pub fn fetch_missing<C: TranslationClient + ?Sized>(
    words: &[String],
    client: &C,
    cache: &Path,
    source_lang: &str,
    target_lang: &str,
) -> Result<TranslationTable, TranslationError> {
    let mut table = load_table_file(cache, source_lang, target_lang)?;
    let mut seen = HashSet::new();
    let todo: Vec<String> = words
        .iter()
        .map(|w| normalize_word(w))
        .filter(|w| !table.contains(w) && seen.insert(w.clone()))
        .collect();
    if todo.is_empty() {
        return Ok(table);
    }
    let mut file = OpenOptions::new().create(true).append(true).open(cache)?;
    for (b, batch) in todo.chunks(BATCH_SIZE).enumerate() {
        let remaining = || todo[b * BATCH_SIZE..].to_vec();
        let answers = match client.translate(batch, source_lang, target_lang) {
            Ok(a) => a,
            Err(e) => {
                return Err(TranslationError::Fetch { message: e.to_string(), remaining: remaining() })
            }
        };
        if answers.len() != batch.len() {
            return Err(TranslationError::Fetch {
                message: format!("{} answers for {} words", answers.len(), batch.len()),
                remaining: remaining(),
            });
        }
        let mut lines = String::new();
        let mut pairs = Vec::with_capacity(batch.len());
        for (word, target) in batch.iter().zip(answers) {
            let target = normalize_word(target.trim());
            if target.is_empty() || target.contains(['\t', '\n', '\r']) {
                return Err(TranslationError::Fetch {
                    message: format!("unusable translation {target:?} for `{word}`"),
                    remaining: remaining(),
                });
            }
            lines.push_str(word);
            lines.push('\t');
            lines.push_str(&target);
            lines.push('\n');
            pairs.push((word.clone(), target));
        }
        file.write_all(lines.as_bytes())?;
        file.sync_data()?;
        for (w, t) in pairs {
            table.insert(w, t);
        }
    }
    Ok(table)
}

#[derive(Serialize)]
struct TranslateRequest<'a> {
    source: &'a str,
    target: &'a str,
    q: &'a [String],
}

#[derive(Deserialize)]
struct TranslateResponse {
    translations: Vec<String>,
}

/// JSON-over-HTTP translation client.
///
/// Sends `POST <endpoint>` with body `{"source", "target", "q": [words]}` and
/// a bearer token; expects `{"translations": [strings]}` in the same order.
#[derive(Debug, Clone)]
pub struct HttpTranslationClient {
    endpoint: String,
    key: String,
}

impl HttpTranslationClient {
    pub fn new(endpoint: impl Into<String>, key: impl Into<String>) -> Self {
        Self { endpoint: endpoint.into(), key: key.into() }
    }

    /// Reads the credential from [`TRANSLATE_KEY_ENV`].
    pub fn from_env(endpoint: impl Into<String>) -> Result<Self, TranslationError> {
        let key = std::env::var(TRANSLATE_KEY_ENV).map_err(|_| TranslationError::MissingKey)?;
        if key.is_empty() {
            return Err(TranslationError::MissingKey);
        }
        Ok(Self::new(endpoint, key))
    }
}

impl TranslationClient for HttpTranslationClient {
    fn translate(
        &self,
        words: &[String],
        source_lang: &str,
        target_lang: &str,
    ) -> Result<Vec<String>, TranslationError> {
        let request = TranslateRequest { source: source_lang, target: target_lang, q: words };
        let fetch_err = |message: String| TranslationError::Fetch {
            message,
            remaining: words.to_vec(),
        };
        let mut response = ureq::post(&self.endpoint)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&request)
            .map_err(|e| fetch_err(e.to_string()))?;
        let body: TranslateResponse = response
            .body_mut()
            .read_json()
            .map_err(|e| TranslationError::InvalidResponse(e.to_string()))?;
        Ok(body.translations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{Split, VariableSet};
    use std::cell::RefCell;

    fn source() -> Lexicon {
        let entries = vec![
            LexiconEntry::new("sunshine", vec![8.1, 5.3]).with_split(Split::Train),
            LexiconEntry::new("nuclear", vec![3.5, 6.2]).with_split(Split::Dev),
            LexiconEntry::new("terrorism", vec![1.6, 7.4]).with_split(Split::Test),
        ];
        Lexicon::with_builtin_scales("en", VariableSet::new(&["Val", "Aro"]).unwrap(), entries)
            .unwrap()
    }

    #[test]
    fn loads_pairs() {
        let t = load_translation_table("sunshine\tSonnenschein\n".as_bytes(), "en", "de").unwrap();
        assert_eq!(t.get("sunshine"), Some("Sonnenschein"));
        assert!(load_translation_table("".as_bytes(), "en", "de").unwrap().is_empty());
    }

    #[test]
    fn last_line_wins() {
        let t = load_translation_table("a\tx\nb\ty\na\tz\n".as_bytes(), "en", "de").unwrap();
        assert_eq!(t.get("a"), Some("z"));
        assert_eq!(t.len(), 2);
        let pairs: Vec<_> = t.iter().collect();
        assert_eq!(pairs, vec![("a", "z"), ("b", "y")]);
    }

    #[test]
    fn rejects_bad_lines() {
        for (text, line) in [("a\tb\nno tab\n", 2), ("a\tb\tc\n", 1), ("a\t\n", 1)] {
            match load_translation_table(text.as_bytes(), "en", "de") {
                Err(TranslationError::Parse { line: l, .. }) => assert_eq!(l, line),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn projection_copies_labels_and_splits() {
        let mut table = TranslationTable::new("en", "de");
        table.insert("sunshine".into(), "Sonnenschein".into());
        table.insert("nuclear".into(), "nuklear".into());
        table.insert("terrorism".into(), "Terrorismus".into());
        let (mt, stats) = project_lexicon(&source(), &table, MissingPolicy::Skip).unwrap();
        assert_eq!(stats.projected, 3);
        let e = &mt.entries()[0];
        assert_eq!(e.word, "Sonnenschein");
        assert_eq!(e.emotions.values(), &[8.1, 5.3]);
        assert_eq!(e.split, Split::Train);
        assert_eq!(e.provenance, Provenance::Translated);
        assert_eq!(mt.language(), "de");
    }

    #[test]
    fn identity_projection() {
        let src = source();
        let (mt, _) = project_lexicon(&src, &identity_table(&src), MissingPolicy::Strict).unwrap();
        assert_eq!(mt.clone().with_provenance(Provenance::Human), src);
    }

    #[test]
    fn missing_policy() {
        let mut table = TranslationTable::new("en", "de");
        table.insert("sunshine".into(), "Sonnenschein".into());
        let (mt, stats) = project_lexicon(&source(), &table, MissingPolicy::Skip).unwrap();
        assert_eq!(mt.len(), 1);
        assert_eq!(stats.skipped, 2);
        assert!(matches!(
            project_lexicon(&source(), &table, MissingPolicy::Strict),
            Err(TranslationError::Missing(w)) if w == "nuclear"
        ));
    }

    struct Reverse {
        calls: RefCell<Vec<usize>>,
    }

    impl TranslationClient for Reverse {
        fn translate(&self, words: &[String], _: &str, _: &str) -> Result<Vec<String>, TranslationError> {
            self.calls.borrow_mut().push(words.len());
            Ok(words.iter().map(|w| w.chars().rev().collect()).collect())
        }
    }

    #[test]
    fn fetch_skips_cached_words() {
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.tsv");
        std::fs::write(&cache, "a\tA\nb\tB\n").unwrap();
        let client = Reverse { calls: RefCell::new(vec![]) };
        let t = fetch_missing(&["a".into(), "b".into()], &client, &cache, "en", "de").unwrap();
        assert!(client.calls.borrow().is_empty());
        assert_eq!(t.len(), 2);
        let t = fetch_missing(&[], &client, &cache, "en", "de").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(std::fs::read_to_string(&cache).unwrap(), "a\tA\nb\tB\n");
    }

    /// Replays answers from a fixed table, optionally failing on one call.
    struct Stub {
        answers: HashMap<String, String>,
        fail_on_call: Option<usize>,
        calls: RefCell<Vec<usize>>,
    }

    impl TranslationClient for Stub {
        fn translate(&self, words: &[String], _: &str, _: &str) -> Result<Vec<String>, TranslationError> {
            let call = self.calls.borrow().len();
            self.calls.borrow_mut().push(words.len());
            if self.fail_on_call == Some(call) {
                return Err(TranslationError::InvalidResponse("service unavailable".into()));
            }
            Ok(words.iter().map(|w| self.answers[w].clone()).collect())
        }
    }

    fn stub(words: &[String], fail_on_call: Option<usize>) -> Stub {
        Stub {
            answers: words.iter().map(|w| (w.clone(), format!("{w}-de"))).collect(),
            fail_on_call,
            calls: RefCell::new(vec![]),
        }
    }

    #[test]
    fn stub_replay_matches_table_projection() {
        let words: Vec<String> = (0..10).map(|i| format!("wort{i}")).collect();
        let entries = words.iter().enumerate().map(|(i, w)| LexiconEntry::new(w, vec![1.0 + i as f64 * 0.5]));
        let src = Lexicon::with_builtin_scales("en", VariableSet::new(&["Val"]).unwrap(), entries.collect())
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.tsv");
        let fetched = fetch_missing(&words, &stub(&words, None), &cache, "en", "de").unwrap();
        let reloaded = load_table_file(&cache, "en", "de").unwrap();
        assert_eq!(fetched, reloaded);
        let (a, _) = project_lexicon(&src, &fetched, MissingPolicy::Strict).unwrap();
        let (b, _) = project_lexicon(&src, &reloaded, MissingPolicy::Strict).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.entries()[3].word, "wort3-de");
    }

    #[test]
    fn failed_batch_keeps_progress_and_reports_remainder() {
        let words: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
        let dir = tempfile::tempdir().unwrap();
        let cache = dir.path().join("cache.tsv");
        let failing = stub(&words, Some(1));
        match fetch_missing(&words, &failing, &cache, "en", "de") {
            Err(e @ TranslationError::Fetch { .. }) => {
                assert!(e.is_retryable());
                let TranslationError::Fetch { remaining, .. } = e else { unreachable!() };
                assert_eq!(remaining, words[BATCH_SIZE..].to_vec());
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(load_table_file(&cache, "en", "de").unwrap().len(), BATCH_SIZE);

        let client = stub(&words, None);
        let t = fetch_missing(&words, &client, &cache, "en", "de").unwrap();
        assert_eq!(*client.calls.borrow(), vec![128, 44]);
        assert_eq!(t.len(), 300);
        let again = stub(&words, None);
        assert_eq!(fetch_missing(&words, &again, &cache, "en", "de").unwrap(), t);
        assert!(again.calls.borrow().is_empty());
    }

    #[test]
    fn wrong_answer_count_is_a_fetch_error() {
        struct Short;
        impl TranslationClient for Short {
            fn translate(&self, _: &[String], _: &str, _: &str) -> Result<Vec<String>, TranslationError> {
                Ok(vec!["x".into()])
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let words = vec!["a".to_string(), "b".to_string()];
        let err = fetch_missing(&words, &Short, &dir.path().join("c.tsv"), "en", "de").unwrap_err();
        assert!(matches!(err, TranslationError::Fetch { remaining, .. } if remaining == words));
    }

    /// Serves one HTTP request with `status` and `body`, returning the raw
    /// request it received.
    fn serve_once(status: &'static str, body: &'static str) -> (String, std::thread::JoinHandle<String>) {
        use std::io::Read;
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let url = format!("http://{}/translate", listener.local_addr().unwrap());
        let handle = std::thread::spawn(move || {
            let (mut stream, _) = listener.accept().unwrap();
            let mut buf = Vec::new();
            let mut chunk = [0u8; 1024];
            let body_start = loop {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
                if let Some(p) = buf.windows(4).position(|w| w == b"\r\n\r\n") {
                    break p + 4;
                }
            };
            let head = String::from_utf8_lossy(&buf[..body_start]).to_lowercase();
            let len: usize = head
                .lines()
                .find_map(|l| l.strip_prefix("content-length:"))
                .map(|v| v.trim().parse().unwrap())
                .unwrap_or(0);
            while buf.len() < body_start + len {
                let n = stream.read(&mut chunk).unwrap();
                buf.extend_from_slice(&chunk[..n]);
            }
            let reply = format!(
                "HTTP/1.1 {status}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
            stream.write_all(reply.as_bytes()).unwrap();
            String::from_utf8(buf).unwrap()
        });
        (url, handle)
    }

    #[test]
    fn http_client_round_trip() {
        let (url, server) = serve_once("200 OK", r#"{"translations":["Sonne","Angst"]}"#);
        let client = HttpTranslationClient::new(url, "secret");
        let out = client.translate(&["sun".into(), "fear".into()], "en", "de").unwrap();
        assert_eq!(out, vec!["Sonne", "Angst"]);
        let request = server.join().unwrap();
        assert!(request.starts_with("POST /translate"));
        assert!(request.to_lowercase().contains("authorization: bearer secret"));
        let body = &request[request.find("\r\n\r\n").unwrap() + 4..];
        let json: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(json, serde_json::json!({"source": "en", "target": "de", "q": ["sun", "fear"]}));
    }

    #[test]
    fn http_error_status_is_retryable() {
        let (url, server) = serve_once("503 Service Unavailable", "{}");
        let client = HttpTranslationClient::new(url, "k");
        let err = client.translate(&["sun".into()], "en", "de").unwrap_err();
        assert!(err.is_retryable(), "{err:?}");
        server.join().unwrap();
    }
}

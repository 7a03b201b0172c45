//! Context generation and similarity scoring.
//!
//! Keywords go in, four candidate command phrasings come out, each scored by
//! set overlap with the keywords and rescaled into [0.6, 1.0] so weak
//! candidates keep a baseline.

use std::collections::HashSet;
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::config::{ContextConfig, ProviderMode, SynonymSpec};
use crate::domain::KeywordSet;
use crate::error::{Error, Result};

pub const CONTEXT_COUNT: usize = 4;
pub const SCORE_FLOOR: f64 = 0.6;
pub const SCORE_SPAN: f64 = 0.4;

pub const DEFAULT_STOPWORDS: &str = include_str!("../config/stopwords.txt");
pub const DEFAULT_TEMPLATES: &str = include_str!("../config/templates.toml");

/// |a ∩ b| / |a ∪ b|.
pub fn jaccard(a: &KeywordSet, b: &KeywordSet) -> Result<f64> {
    let inter = a.iter().filter(|t| b.contains(t)).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return Err(Error::UndefinedSimilarity);
    }
    Ok(inter as f64 / union as f64)
}

/// Affine map of a ratio in [0, 1] onto [0.6, 1.0].
pub fn scale_similarity(j: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&j) {
        return Err(Error::InvalidRatio(j));
    }
    Ok(SCORE_FLOOR + SCORE_SPAN * j)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Stopwords(HashSet<String>);

impl Stopwords {
    /// One word per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Self {
        Self(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_lowercase)
                .collect(),
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    pub fn contains(&self, token: &str) -> bool {
        self.0.contains(token)
    }
}

impl Default for Similarity {
    fn default() -> Self {
        Self {
            stopwords: Stopwords::parse(DEFAULT_STOPWORDS),
            synonyms: Vec::new(),
        }
    }
}

/// Token-set similarity used for every score in the pipeline: stopwords are
/// removed from both sides, then [`jaccard`] is taken. With synonyms enabled,
/// a configured pair present on opposite sides is merged into one union
/// element that contributes its credit to the intersection, and is exempt
/// from stopword removal.
#[derive(Debug, Clone)]
pub struct Similarity {
    stopwords: Stopwords,
    synonyms: Vec<SynonymSpec>,
}

impl Similarity {
    pub fn new(stopwords: Stopwords, synonyms: Vec<SynonymSpec>) -> Self {
        Self {
            stopwords,
            synonyms,
        }
    }

    pub fn from_config(cfg: &ContextConfig) -> Result<Self> {
        let stopwords = match &cfg.stopwords_file {
            Some(path) => Stopwords::load(path)?,
            None => Stopwords::parse(DEFAULT_STOPWORDS),
        };
        let synonyms = if cfg.synonyms_enabled {
            cfg.synonyms.clone()
        } else {
            Vec::new()
        };
        for s in &synonyms {
            if !(0.0..=1.0).contains(&s.credit) {
                return Err(Error::Config(format!(
                    "synonym credit {} not in [0, 1]",
                    s.credit
                )));
            }
        }
        Ok(Self::new(stopwords, synonyms))
    }

    pub fn stopwords(&self) -> &Stopwords {
        &self.stopwords
    }

    pub fn strip(&self, set: &KeywordSet) -> KeywordSet {
        set.without(|t| self.stopwords.contains(t))
    }

    pub fn ratio(&self, a: &KeywordSet, b: &KeywordSet) -> Result<f64> {
        if self.synonyms.is_empty() {
            return jaccard(&self.strip(a), &self.strip(b));
        }

        let mut a_rest: Vec<&str> = a.iter().collect();
        let mut b_rest: Vec<&str> = b.iter().collect();
        let mut credit = 0.0;
        let mut pairs = 0usize;
        for syn in &self.synonyms {
            for (x, y) in [
                (syn.token.as_str(), syn.canonical.as_str()),
                (syn.canonical.as_str(), syn.token.as_str()),
            ] {
                let a_has = a_rest.contains(&x) && !b_rest.contains(&x);
                let b_has = b_rest.contains(&y) && !a_rest.contains(&y);
                if a_has && b_has {
                    a_rest.retain(|t| *t != x);
                    b_rest.retain(|t| *t != y);
                    credit += syn.credit;
                    pairs += 1;
                }
            }
        }

        let a_rest: Vec<&str> = a_rest
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect();
        let b_rest: Vec<&str> = b_rest
            .into_iter()
            .filter(|t| !self.stopwords.contains(t))
            .collect();
        let exact = a_rest.iter().filter(|t| b_rest.contains(t)).count();
        let union = a_rest.len() + b_rest.len() - exact + pairs;
        if union == 0 {
            return Err(Error::UndefinedSimilarity);
        }
        Ok((exact as f64 + credit) / union as f64)
    }

    /// [`Self::ratio`] rescaled into [0.6, 1.0]; undefined similarity counts
    /// as no overlap.
    pub fn score(&self, a: &KeywordSet, b: &KeywordSet) -> (f64, f64) {
        let j = match self.ratio(a, b) {
            Ok(j) => j,
            Err(e) => {
                tracing::debug!(%a, %b, error = %e, "treating as no overlap");
                0.0
            }
        };
        (j, scale_similarity(j).expect("ratio is within [0, 1]"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TaskPhrase {
    keyword: String,
    alone: String,
    tail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateTables {
    default_action: String,
    actions: Vec<String>,
    motion_directions: Vec<String>,
    default_direction: String,
    turn_directions: Vec<String>,
    no_task_alone: String,
    no_task_tail: String,
    #[serde(rename = "task")]
    tasks: Vec<TaskPhrase>,
}

impl Default for TemplateTables {
    fn default() -> Self {
        Self::from_toml(DEFAULT_TEMPLATES).expect("bundled template tables are valid")
    }
}

impl TemplateTables {
    pub fn from_toml(text: &str) -> Result<Self> {
        let tables: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if tables.turn_directions.len() != 2 {
            return Err(Error::Config("exactly two turn directions required".into()));
        }
        if tables.motion_directions.iter().any(|d| tables.turn_directions.contains(d))
            || !tables.motion_directions.contains(&tables.default_direction)
        {
            return Err(Error::Config(
                "motion directions must exclude turn directions and include the default".into(),
            ));
        }
        Ok(tables)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn task_keywords(&self) -> impl Iterator<Item = &str> {
        self.tasks.iter().map(|t| t.keyword.as_str())
    }

    /// The four template contexts for `k`, in generation order.
    pub fn generate(&self, k: &KeywordSet) -> [String; CONTEXT_COUNT] {
        let first_of = |table: &[String]| k.iter().find(|t| table.iter().any(|x| x == t));
        let action = first_of(&self.actions).unwrap_or(&self.default_action);
        let direction = first_of(&self.motion_directions).unwrap_or(&self.default_direction);
        let task = k
            .iter()
            .find_map(|t| self.tasks.iter().find(|p| p.keyword == t));

        let action = capitalize(action);
        let (alone, tail) = match task {
            Some(p) => (p.alone.clone(), p.tail.as_str()),
            None => (
                self.no_task_alone.replace("{action}", &action),
                self.no_task_tail.as_str(),
            ),
        };
        [
            alone,
            format!("{action} {direction} {tail}"),
            format!("{action} {} {tail}", self.turn_directions[0]),
            format!("{action} {} {tail}", self.turn_directions[1]),
        ]
    }
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Generated phrasing before scoring.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftContext {
    pub index: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateContext {
    /// 1..=4, generation order.
    pub index: u8,
    pub text: String,
    pub token_set: KeywordSet,
    pub jaccard: f64,
    pub score: f64,
}

#[derive(Debug, Clone, Serialize)]
struct ExternalRequest<'a> {
    keywords: &'a KeywordSet,
}

#[derive(Debug, Clone, Deserialize)]
struct ExternalResponse {
    contexts: Vec<String>,
}

/// Where candidate phrasings come from.
#[derive(Debug, Clone)]
pub enum ContextProvider {
    Template(TemplateTables),
    /// POSTs `{"keywords":[...]}` and expects `{"contexts":[four strings]}`.
    /// Any failure falls back to the templates.
    External {
        endpoint: String,
        client: reqwest::Client,
        fallback: TemplateTables,
    },
}

impl Default for ContextProvider {
    fn default() -> Self {
        ContextProvider::Template(TemplateTables::default())
    }
}

impl ContextProvider {
    pub fn external(endpoint: impl Into<String>, timeout: Duration, fallback: TemplateTables) -> Result<Self> {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        Ok(ContextProvider::External {
            endpoint: endpoint.into(),
            client,
            fallback,
        })
    }

    pub fn from_config(cfg: &ContextConfig) -> Result<Self> {
        let tables = match &cfg.templates_file {
            Some(path) => TemplateTables::load(path)?,
            None => TemplateTables::default(),
        };
        match cfg.provider {
            ProviderMode::Template => Ok(ContextProvider::Template(tables)),
            ProviderMode::External => {
                let endpoint = cfg.endpoint.clone().ok_or_else(|| {
                    Error::Config("external provider needs `endpoint`".into())
                })?;
                Self::external(endpoint, Duration::from_millis(cfg.timeout_ms), tables)
            }
        }
    }

    fn tables(&self) -> &TemplateTables {
        match self {
            ContextProvider::Template(t) => t,
            ContextProvider::External { fallback, .. } => fallback,
        }
    }

    async fn fetch_external(
        client: &reqwest::Client,
        endpoint: &str,
        k: &KeywordSet,
    ) -> std::result::Result<[String; CONTEXT_COUNT], String> {
        let resp = client
            .post(endpoint)
            .json(&ExternalRequest { keywords: k })
            .send()
            .await
            .map_err(|e| e.to_string())?
            .error_for_status()
            .map_err(|e| e.to_string())?;
        let body: ExternalResponse = resp.json().await.map_err(|e| e.to_string())?;
        let texts: Vec<String> = body
            .contexts
            .into_iter()
            .map(|s| s.trim().to_string())
            .collect();
        let distinct: HashSet<&String> = texts.iter().collect();
        if texts.len() != CONTEXT_COUNT
            || distinct.len() != CONTEXT_COUNT
            || texts.iter().any(String::is_empty)
        {
            return Err(format!("expected four distinct contexts, got {texts:?}"));
        }
        Ok(texts.try_into().expect("length checked"))
    }

    /// Four distinct phrasings for `k`.
    pub async fn generate_contexts(&self, k: &KeywordSet) -> Result<Vec<DraftContext>> {
        if k.is_empty() {
            return Err(Error::EmptyKeywords);
        }
        let texts = match self {
            ContextProvider::Template(tables) => tables.generate(k),
            ContextProvider::External {
                endpoint,
                client,
                fallback,
            } => match Self::fetch_external(client, endpoint, k).await {
                Ok(texts) => texts,
                Err(reason) => {
                    tracing::warn!(%endpoint, %reason, "external context provider unavailable; using templates");
                    fallback.generate(k)
                }
            },
        };
        Ok(drafts(texts))
    }

    /// Template-only generation, usable without a runtime.
    pub fn generate_template(&self, k: &KeywordSet) -> Result<Vec<DraftContext>> {
        if k.is_empty() {
            return Err(Error::EmptyKeywords);
        }
        Ok(drafts(self.tables().generate(k)))
    }
}

fn drafts(texts: [String; CONTEXT_COUNT]) -> Vec<DraftContext> {
    texts
        .into_iter()
        .enumerate()
        .map(|(i, text)| DraftContext {
            index: i as u8 + 1,
            text,
        })
        .collect()
}

/// Scores each draft against the keywords; sorted by score descending, ties
/// by index ascending.
pub fn score_contexts(
    similarity: &Similarity,
    k: &KeywordSet,
    drafts: &[DraftContext],
) -> Vec<CandidateContext> {
    let mut scored: Vec<CandidateContext> = drafts
        .iter()
        .map(|d| {
            let token_set = KeywordSet::from_text(&d.text);
            let (jaccard, score) = similarity.score(k, &token_set);
            CandidateContext {
                index: d.index,
                text: d.text.clone(),
                token_set,
                jaccard,
                score,
            }
        })
        .collect();
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.index.cmp(&b.index))
    });
    scored
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::tokenize;
    use proptest::prelude::*;

    fn k(text: &str) -> KeywordSet {
        tokenize(text).unwrap()
    }

    fn texts(k: &KeywordSet) -> Vec<String> {
        ContextProvider::default()
            .generate_template(k)
            .unwrap()
            .into_iter()
            .map(|d| d.text)
            .collect()
    }

    #[test]
    fn jaccard_examples() {
        assert_eq!(jaccard(&k("patrol area"), &k("patrol area")).unwrap(), 1.0);
        assert_eq!(jaccard(&k("patrol"), &k("move")).unwrap(), 0.0);
        assert_eq!(
            jaccard(&k("move forward patrol"), &k("move patrol")).unwrap(),
            2.0 / 3.0
        );
        assert!(matches!(
            jaccard(&KeywordSet::default(), &KeywordSet::default()),
            Err(Error::UndefinedSimilarity)
        ));
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(scale_similarity(1.0).unwrap(), 1.0);
        assert_eq!(scale_similarity(0.0).unwrap(), 0.6);
        assert!((scale_similarity(2.0 / 3.0).unwrap() - 0.8667).abs() < 1e-4);
        assert!(matches!(scale_similarity(1.5), Err(Error::InvalidRatio(_))));
        assert!(matches!(scale_similarity(-0.1), Err(Error::InvalidRatio(_))));
    }

    #[test]
    fn template_reproduces_move_forward_patrol_example() {
        assert_eq!(
            texts(&k("move forward patrol")),
            [
                "Patrol the area",
                "Move forward and patrol",
                "Move left and patrol",
                "Move right and patrol"
            ]
        );
    }

    #[test]
    fn template_golden_go() {
        assert_eq!(
            texts(&k("go")),
            [
                "Go to the target area",
                "Go forward to the area",
                "Go left to the area",
                "Go right to the area"
            ]
        );
    }

    #[test]
    fn template_single_task_keyword() {
        let out = texts(&k("patrol"));
        assert_eq!(out.iter().collect::<HashSet<_>>().len(), 4);
        assert!(out.iter().all(|t| t.to_lowercase().contains("patrol")));
    }

    #[test]
    fn template_turn_direction_keyword_keeps_contexts_distinct() {
        let out = texts(&k("run left search"));
        assert_eq!(
            out,
            [
                "Search the area",
                "Run forward and search",
                "Run left and search",
                "Run right and search"
            ]
        );
    }

    #[test]
    fn generation_rejects_empty_keywords() {
        assert!(matches!(
            ContextProvider::default().generate_template(&KeywordSet::default()),
            Err(Error::EmptyKeywords)
        ));
    }

    #[test]
    fn patrol_area_scores_one() {
        let sim = Similarity::default();
        let drafts = vec![DraftContext {
            index: 1,
            text: "patrol area".into(),
        }];
        let scored = score_contexts(&sim, &k("patrol area"), &drafts);
        assert_eq!(scored[0].score, 1.0);
    }

    #[test]
    fn disjoint_candidate_scores_floor() {
        let sim = Similarity::default();
        let (j, s) = sim.score(&k("patrol"), &k("run right"));
        assert_eq!((j, s), (0.0, 0.6));
    }

    #[test]
    fn undefined_similarity_scores_floor() {
        let sim = Similarity::default();
        let (j, s) = sim.score(&k("the area"), &k("to a"));
        assert_eq!((j, s), (0.0, 0.6));
    }

    #[test]
    fn ordering_is_score_desc_then_index() {
        let sim = Similarity::default();
        let k = k("move forward patrol");
        let drafts = ContextProvider::default().generate_template(&k).unwrap();
        let scored = score_contexts(&sim, &k, &drafts);
        // Oracle: tokens after stopword removal
        // 1 {patrol} -> 1/3; 2 {move, forward, patrol} -> 1; 3,4 -> 2/4.
        let order: Vec<u8> = scored.iter().map(|c| c.index).collect();
        assert_eq!(order, [2, 3, 4, 1]);
        assert_eq!(scored[0].score, 1.0);
        assert!((scored[1].score - 0.8).abs() < 1e-12);
        assert!((scored[3].score - (0.6 + 0.4 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn synonym_pair_counts_partial_overlap() {
        let spec = SynonymSpec {
            token: "zone".into(),
            canonical: "area".into(),
            credit: 0.5,
        };
        let plain = Similarity::default();
        let syn = Similarity::new(Stopwords::parse(DEFAULT_STOPWORDS), vec![spec]);
        let top = KeywordSet::from_text("Patrol the area");
        let cmd = KeywordSet::from_text("Patrol zone");
        assert_eq!(plain.ratio(&top, &cmd).unwrap(), 0.5);
        assert_eq!(syn.ratio(&top, &cmd).unwrap(), 0.75);
        assert!((syn.score(&top, &cmd).1 - 0.9).abs() < 1e-12);
        // Symmetric in argument order.
        assert_eq!(syn.ratio(&cmd, &top).unwrap(), 0.75);
        // Without a counterpart the pair does not fire.
        assert_eq!(syn.ratio(&k("patrol"), &cmd).unwrap(), 0.5);
    }

    #[tokio::test]
    async fn external_provider_falls_back_when_unreachable() {
        let provider = ContextProvider::external(
            "http://127.0.0.1:1/contexts",
            Duration::from_millis(200),
            TemplateTables::default(),
        )
        .unwrap();
        let out = provider.generate_contexts(&k("go")).await.unwrap();
        assert_eq!(out[0].text, "Go to the target area");
    }

    proptest! {
        #[test]
        fn scale_is_monotone_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let (sa, sb) = (scale_similarity(a).unwrap(), scale_similarity(b).unwrap());
            prop_assert!((0.6..=1.0).contains(&sa));
            if a <= b { prop_assert!(sa <= sb); }
        }

        #[test]
        fn jaccard_symmetric_and_extremal(
            a in prop::collection::vec("[a-f]", 1..5),
            b in prop::collection::vec("[a-f]", 1..5),
        ) {
            let (a, b) = (KeywordSet::from_tokens(&a), KeywordSet::from_tokens(&b));
            let j = jaccard(&a, &b).unwrap();
            prop_assert_eq!(j, jaccard(&b, &a).unwrap());
            let same: HashSet<&str> = a.iter().collect();
            let other: HashSet<&str> = b.iter().collect();
            prop_assert_eq!(j == 1.0, same == other);
            prop_assert_eq!(j == 0.0, same.is_disjoint(&other));
        }

        #[test]
        fn template_generation_is_pure(words in prop::collection::vec(
            prop::sample::select(vec!["move", "go", "run", "execute", "forward", "backward",
                "left", "right", "patrol", "search", "return", "speak", "zone"]), 1..6)) {
            let k = KeywordSet::from_tokens(&words);
            let first = texts(&k);
            prop_assert_eq!(first.iter().collect::<HashSet<_>>().len(), 4);
            prop_assert_eq!(texts(&k), first);
            let sim = Similarity::default();
            let drafts = ContextProvider::default().generate_template(&k).unwrap();
            for c in score_contexts(&sim, &k, &drafts) {
                prop_assert!((0.6..=1.0).contains(&c.score));
                prop_assert!((c.score - (0.6 + 0.4 * c.jaccard)).abs() < 1e-9);
            }
        }
    }
}

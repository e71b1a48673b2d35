//! The nine pipeline commands. Each takes its parsed flags plus the
//! loaded config and returns the text for stdout; files named by `--out`
//! are written as a side effect. Errors carry the exit class.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use flowforge_core::ast::{build_ast, AstKind, AstNode, WorkflowAst};
use flowforge_core::emit::emit_code;
use flowforge_core::ingest::{detect_format, parse_shortcut, scan_binary_params};
use flowforge_core::metrics::{
    agreement_rate, codebleu_with, MetricReport, WEIGHT_SUM_TOLERANCE,
};
use flowforge_core::naming::assign_names;
use flowforge_core::registry::{load_registry, ApiDoc, ApiRegistry};
use flowforge_core::validator::{validate, BuiltinAllowlist, Rule};
use flowforge_core::wfdsl;
use flowforge_gateway::{
    extract_json, parse_comment_map, parse_rename_map, parse_verdict, render, template,
    ChatRequest, Gateway, MockTransport, TemplateName, VerdictParseError,
};

use crate::config::PipelineConfig;
use crate::corpus::{
    self, compute_stats, read_corpus, read_sample, sample_line, seed_sample, write_corpus,
    WorkflowSample,
};
use crate::pool;
use crate::sampling::{draw, sample_apis, SamplingConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Transport(String),
}

impl CliError {
    /// 1 usage, 2 data, 3 transport; 0 is success.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Transport(_) => 3,
        }
    }
}

macro_rules! data_from {
    ($($ty:ty),* $(,)?) => {$(
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_from!(
    flowforge_core::ingest::IngestError,
    flowforge_core::ast::BuildError,
    flowforge_core::emit::EmitError,
    flowforge_core::registry::RegistryError,
    flowforge_core::metrics::MetricError,
    flowforge_gateway::TemplateError,
    crate::corpus::CorpusError,
    crate::sampling::SamplingError,
);

impl From<flowforge_gateway::TransportError> for CliError {
    fn from(e: flowforge_gateway::TransportError) -> Self {
        CliError::Transport(e.to_string())
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

/// Route the payload to `--out` when given, stdout otherwise.
fn deliver(out: Option<&Path>, payload: String) -> Result<String, CliError> {
    match out {
        Some(path) => {
            write_text(path, &payload)?;
            Ok(String::new())
        }
        None => Ok(payload),
    }
}

fn load_registry_file(path: &Path) -> Result<ApiRegistry, CliError> {
    Ok(load_registry(&read_text(path)?)?)
}

fn build_gateway(mock: Option<&Path>, cfg: &PipelineConfig) -> Result<Gateway, CliError> {
    let transport: Box<dyn flowforge_gateway::ChatTransport> = match mock {
        Some(path) => {
            let rules = MockTransport::from_json(&read_text(path)?)
                .map_err(|e| CliError::Data(format!("bad mock file {}: {e}", path.display())))?;
            Box::new(rules)
        }
        None => {
            let key = std::env::var(&cfg.api_key_env).map_err(|_| {
                CliError::Usage(format!(
                    "environment variable {} is not set; pass --mock <file> for offline runs",
                    cfg.api_key_env
                ))
            })?;
            let http = flowforge_gateway::HttpConfig {
                base_url: cfg.base_url.clone(),
                api_key: Some(key),
                max_retries: cfg.max_retries,
                initial_backoff: std::time::Duration::from_millis(cfg.initial_backoff_ms),
                timeout: Some(std::time::Duration::from_secs(cfg.timeout_s)),
            };
            Box::new(flowforge_gateway::HttpTransport::new(http))
        }
    };
    Ok(Gateway::new(transport, cfg.max_inflight))
}

fn ask(gateway: &Gateway, cfg: &PipelineConfig, prompt: String) -> Result<String, CliError> {
    let mut request = ChatRequest::single(&cfg.model, prompt);
    request.temperature = cfg.temperature;
    request.max_tokens = cfg.max_tokens;
    Ok(gateway.chat(&request)?.content)
}

fn render_prompt(
    name: TemplateName,
    bindings: &BTreeMap<&str, &str>,
) -> Result<String, CliError> {
    Ok(render(&template(name), bindings)?)
}

/// Documentation block for a prompt: formatted docs for known ids, a
/// marker line for unknown ones, in the order the ids were stored.
fn docs_block(registry: &ApiRegistry, ids: &[String]) -> String {
    let mut parts = Vec::new();
    for id in ids {
        match registry.get(id) {
            Some(doc) => parts.push(corpus::format_api_doc(doc)),
            None => {
                log::warn!("no documentation for {id}");
                parts.push(format!("# no documentation for {id}"));
            }
        }
    }
    parts.join("\n\n")
}

fn call_identifiers(ast: &WorkflowAst) -> Vec<String> {
    fn walk(node: &AstNode, out: &mut BTreeSet<String>) {
        if node.kind == AstKind::Call {
            if let Some(action) = &node.action {
                out.insert(action.identifier.clone());
            }
        }
        node.children.iter().for_each(|c| walk(c, out));
    }
    let mut out = BTreeSet::new();
    walk(&ast.root, &mut out);
    out.into_iter().collect()
}

// ---------------------------------------------------------------- transcribe

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum RenameMode {
    #[default]
    Deterministic,
    Llm,
}

#[derive(Debug, Args)]
pub struct TranscribeArgs {
    /// Shortcut property list (XML plist or JSON).
    #[arg(long, value_name = "FILE")]
    pub input: PathBuf,
    /// API registry; when given, unknown calls are reported.
    #[arg(long, value_name = "FILE")]
    pub registry: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = RenameMode::Deterministic)]
    pub rename: RenameMode,
    /// Sample id; defaults to the input file stem.
    #[arg(long)]
    pub id: Option<String>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Mock transport rules (JSON); replaces the live endpoint.
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
}

pub fn cmd_transcribe(args: &TranscribeArgs, cfg: &PipelineConfig) -> Result<String, CliError> {
    let bytes = read_bytes(&args.input)?;
    let format = detect_format(&bytes)?;
    let shortcut = parse_shortcut(&bytes, format)?;

    let binary = scan_binary_params(&shortcut);
    if !binary.is_empty() {
        let listing = binary
            .iter()
            .map(|(index, key)| format!("action {index} key {key}"))
            .collect::<Vec<_>>()
            .join(", ");
        return Err(CliError::Data(format!(
            "shortcut carries binary parameters and cannot be transcribed: {listing}"
        )));
    }

    let ast = build_ast(&shortcut)?;
    let mut plan = assign_names(&ast, None);

    if args.rename == RenameMode::Llm {
        let gateway = build_gateway(args.mock.as_deref(), cfg)?;
        let code = emit_code(&ast, &plan)?;

        // Variables in emission order; descriptions name the producing API.
        let mut variables: Vec<&String> = plan.names().values().collect();
        variables.sort_by_key(|name| {
            name.strip_prefix("var_").and_then(|n| n.parse::<usize>().ok()).unwrap_or(usize::MAX)
        });
        let mut descriptions: BTreeMap<&str, &str> = BTreeMap::new();
        for action in &shortcut.actions {
            if let Some(uuid) = &action.uuid {
                if let Some(name) = plan.name_for(uuid) {
                    descriptions.insert(name, &action.identifier);
                }
            }
        }
        let variables_json = serde_json::to_string(&variables).expect("serializes");
        let descriptions_json = serde_json::to_string(&descriptions).expect("serializes");
        let bindings = BTreeMap::from([
            ("code", code.as_str()),
            ("description", descriptions_json.as_str()),
            ("variables", variables_json.as_str()),
        ]);
        let prompt = render_prompt(TemplateName::Rename, &bindings)?;
        let response = ask(&gateway, cfg, prompt)?;
        let renames = parse_rename_map(&response)
            .map_err(|e| CliError::Data(format!("bad rename response: {e}")))?;

        let mut by_uuid = BTreeMap::new();
        for (uuid, old) in plan.names() {
            if let Some(new) = renames.get(old) {
                by_uuid.insert(uuid.clone(), new.clone());
            }
        }
        plan = assign_names(&ast, Some(&by_uuid));
    }

    let code = emit_code(&ast, &plan)?;
    let api_docs = call_identifiers(&ast);
    if let Some(path) = &args.registry {
        let registry = load_registry_file(path)?;
        for id in &api_docs {
            if registry.get(id).is_none() {
                log::warn!("call target {id} is not in the registry");
            }
        }
    }

    let id = match &args.id {
        Some(id) => id.clone(),
        None => args
            .input
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "shortcut".to_string()),
    };
    let mut sample = WorkflowSample::new(&id);
    sample.api_docs = api_docs;
    sample.code = code;
    deliver(args.out.as_deref(), sample_line(&sample))
}

// ------------------------------------------------------------------ thoughts

#[derive(Debug, Args)]
pub struct ThoughtsArgs {
    /// Sample file holding one record.
    #[arg(long, value_name = "FILE")]
    pub sample: PathBuf,
    /// Annotated corpus supplying the in-context pair; falls back to the
    /// built-in seed example.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
    /// Regenerate even if the sample already has a query or plan.
    #[arg(long)]
    pub force: bool,
}

fn strip_comment_lines(code: &str) -> String {
    code.lines()
        .filter(|line| !line.trim_start().starts_with('#'))
        .map(|line| format!("{line}\n"))
        .collect()
}

fn interleave_comments(code: &str, comments: &BTreeMap<usize, String>) -> String {
    let mut out = String::new();
    for (i, line) in code.lines().enumerate() {
        if let Some(text) = comments.get(&(i + 1)) {
            let indent: String = line.chars().take_while(|c| *c == ' ').collect();
            let flat = text.replace(['\n', '\r'], " ");
            out.push_str(&format!("{indent}# {flat}\n"));
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

/// In-context example: first annotated corpus sample, else the seed.
fn icl_pair(corpus: Option<&Path>) -> Result<WorkflowSample, CliError> {
    if let Some(path) = corpus {
        let samples = read_corpus(path)?;
        if let Some(found) =
            samples.into_iter().find(|s| !s.query.is_empty() && !s.code.is_empty())
        {
            return Ok(found);
        }
        log::warn!("corpus {} has no annotated sample; using the seed", path.display());
    }
    Ok(seed_sample())
}

pub fn cmd_thoughts(args: &ThoughtsArgs, cfg: &PipelineConfig) -> Result<String, CliError> {
    let mut sample = read_sample(&args.sample)?;
    if !args.force && (!sample.query.is_empty() || !sample.plan.is_empty()) {
        return Err(CliError::Data(format!(
            "sample {} already has thoughts; pass --force to regenerate",
            sample.id
        )));
    }

    let code = strip_comment_lines(&sample.code);
    wfdsl::parse(&code).map_err(|e| {
        CliError::Data(format!("sample {} code does not parse: {e}", sample.id))
    })?;

    let gateway = build_gateway(args.mock.as_deref(), cfg)?;

    // Bottom-up: comments first, then the plan over the commented code,
    // then the query over the same.
    let expected: Vec<usize> = code
        .lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(i, _)| i + 1)
        .collect();
    let labels: Vec<String> = expected.iter().map(|n| format!("line {n}")).collect();
    let lines_json = serde_json::to_string(&labels).expect("serializes");
    let bindings =
        BTreeMap::from([("code", code.as_str()), ("lines", lines_json.as_str())]);
    let prompt = render_prompt(TemplateName::Comment, &bindings)?;
    let response = ask(&gateway, cfg, prompt)?;
    let map = parse_comment_map(&response, &expected)
        .map_err(|e| CliError::Data(format!("bad comment response: {e}")))?;
    if !map.missing.is_empty() {
        log::warn!("comments missing for lines {:?}", map.missing);
    }
    let commented = interleave_comments(&code, &map.comments);

    let bindings = BTreeMap::from([("code", commented.as_str())]);
    let prompt = render_prompt(TemplateName::Plan, &bindings)?;
    let plan = ask(&gateway, cfg, prompt)?;

    let icl = icl_pair(args.corpus.as_deref())?;
    let bindings = BTreeMap::from([
        ("ICL_code", icl.code.as_str()),
        ("ICL_query", icl.query.as_str()),
        ("code", commented.as_str()),
    ]);
    let prompt = render_prompt(TemplateName::Query, &bindings)?;
    let query = ask(&gateway, cfg, prompt)?;

    sample.code = commented;
    sample.plan = plan;
    sample.query = query;
    deliver(args.out.as_deref(), sample_line(&sample))
}

// -------------------------------------------------------------------- expand

#[derive(Debug, Args)]
pub struct ExpandArgs {
    #[arg(long, value_name = "FILE")]
    pub registry: PathBuf,
    /// Annotated corpus supplying in-context example queries.
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Target workflow category; must be in the configured list.
    #[arg(long)]
    pub category: String,
    /// APIs to sample; defaults to the configured count.
    #[arg(long)]
    pub napis: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// In-context examples (1..=3); defaults to the configured count.
    #[arg(long)]
    pub icl: Option<usize>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
}

/// Synthesized query plus everything needed to reproduce the draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandRecord {
    pub id: String,
    pub category: String,
    pub query: String,
    pub api_docs: Vec<String>,
    pub apps: Vec<String>,
    pub seed: u64,
    pub shortfall: usize,
}

fn category_slug(category: &str) -> String {
    let mut out = String::new();
    for c in category.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('-') && !out.is_empty() {
            out.push('-');
        }
    }
    out.trim_end_matches('-').to_string()
}

pub fn cmd_expand(args: &ExpandArgs, cfg: &PipelineConfig) -> Result<String, CliError> {
    if !cfg.categories.iter().any(|c| c == &args.category) {
        return Err(CliError::Usage(format!(
            "category {:?} is not one of the {} configured categories",
            args.category,
            cfg.categories.len()
        )));
    }
    let samples = read_corpus(&args.corpus)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!(
            "corpus {} is empty; expansion needs in-context examples",
            args.corpus.display()
        )));
    }
    let registry = load_registry_file(&args.registry)?;

    let scfg = SamplingConfig::new(
        args.napis.unwrap_or(cfg.n_apis),
        args.seed,
        &cfg.builtin_app_id,
    );
    let sampled = sample_apis(&registry, &scfg)?;
    if sampled.shortfall > 0 {
        log::warn!("chosen apps provide {} fewer APIs than requested", sampled.shortfall);
    }
    let ids = sampled.ids();

    // Separate stream so the API draw is unaffected by the example count.
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ 0x9E37_79B9_7F4A_7C15);
    let count = args.icl.unwrap_or(cfg.icl_examples).clamp(1, 3).min(samples.len());
    let chosen = draw(&mut rng, &samples, count);
    let examples = format!(
        "\n{}\n",
        chosen.iter().map(|s| format!("- {}", s.query)).collect::<Vec<_>>().join("\n")
    );

    let apis_string = docs_block(&registry, &ids);
    let gateway = build_gateway(args.mock.as_deref(), cfg)?;
    let bindings = BTreeMap::from([
        ("examples", examples.as_str()),
        ("apis_string", apis_string.as_str()),
        ("category", args.category.as_str()),
    ]);
    let prompt = render_prompt(TemplateName::Expansion, &bindings)?;
    let query = ask(&gateway, cfg, prompt)?;

    let record = ExpandRecord {
        id: format!("synth-{}-{:08}", category_slug(&args.category), args.seed),
        category: args.category.clone(),
        query,
        api_docs: ids,
        apps: sampled.apps,
        seed: args.seed,
        shortfall: sampled.shortfall,
    };
    let mut line = serde_json::to_string(&record).expect("serializes");
    line.push('\n');
    deliver(args.out.as_deref(), line)
}

// -------------------------------------------------------------------- refine

#[derive(Debug, Args)]
pub struct RefineArgs {
    #[arg(long, value_name = "FILE")]
    pub sample: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub registry: Option<PathBuf>,
    /// Annotated corpus supplying the in-context sample.
    #[arg(long, value_name = "FILE")]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
}

pub fn cmd_refine(args: &RefineArgs, cfg: &PipelineConfig) -> Result<String, CliError> {
    let mut sample = read_sample(&args.sample)?;
    if sample.code.is_empty() || sample.plan.is_empty() {
        return Err(CliError::Data(format!(
            "sample {} needs both code and plan before refinement",
            sample.id
        )));
    }

    let apis = match &args.registry {
        Some(path) => docs_block(&load_registry_file(path)?, &sample.api_docs),
        None => sample.api_docs.join("\n"),
    };
    let icl = icl_pair(args.corpus.as_deref())?;
    let icl_context = format!(
        "\nQuery:\n{}\n\nThought:\n{}\n\nCode:\n{}",
        icl.query, icl.plan, icl.code
    );

    let gateway = build_gateway(args.mock.as_deref(), cfg)?;
    let bindings = BTreeMap::from([
        ("query", sample.query.as_str()),
        ("thought", sample.plan.as_str()),
        ("code", sample.code.as_str()),
        ("apis", apis.as_str()),
        ("ICL_context", icl_context.as_str()),
    ]);
    let prompt = render_prompt(TemplateName::Refine, &bindings)?;
    let response = ask(&gateway, cfg, prompt)?;

    match refined_fields(&response) {
        Some((plan, code)) if wfdsl::parse(&code).is_ok() => {
            sample.plan = plan;
            sample.code = code;
        }
        Some(_) => {
            log::warn!("refined code for {} does not parse; keeping the original", sample.id)
        }
        None => {
            log::warn!("refinement response for {} is not the expected JSON; keeping the original", sample.id)
        }
    }
    deliver(args.out.as_deref(), sample_line(&sample))
}

/// (plan, code) from a refinement response; the plan may be keyed
/// "thought" or "plan".
fn refined_fields(response: &str) -> Option<(String, String)> {
    let raw = extract_json(response)?;
    let value: serde_json::Value = serde_json::from_str(raw).ok()?;
    let plan = value.get("thought").or_else(|| value.get("plan"))?.as_str()?;
    let code = value.get("code")?.as_str()?;
    Some((plan.to_string(), code.to_string()))
}

// ------------------------------------------------------------------ validate

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub registry: PathBuf,
    /// Destination for the surviving samples.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateSummary {
    pub input: usize,
    pub passed: usize,
    pub rejected: usize,
    pub rule_counts: BTreeMap<String, usize>,
}

fn rule_name(rule: Rule) -> &'static str {
    match rule {
        Rule::NoCode => "NoCode",
        Rule::UnsupportedConstruct => "UnsupportedConstruct",
        Rule::HallucinatedApi => "HallucinatedApi",
        Rule::ParamViolation => "ParamViolation",
    }
}

/// The validator reads model responses, so bare corpus code is wrapped in
/// the response shape it expects.
fn as_response(code: &str) -> String {
    format!("Code:\n```python\n{code}```\n")
}

pub fn cmd_validate(args: &ValidateArgs, cfg: &PipelineConfig) -> Result<String, CliError> {
    let samples = read_corpus(&args.corpus)?;
    let registry = load_registry_file(&args.registry)?;
    let allow = BuiltinAllowlist::default();

    let reports = pool::map_ordered(&samples, cfg.effective_workers(), |sample| {
        let docs: Vec<ApiDoc> =
            sample.api_docs.iter().filter_map(|id| registry.get(id)).cloned().collect();
        validate(&as_response(&sample.code), &docs, &allow)
    });

    let mut survivors = Vec::new();
    let mut rule_counts: BTreeMap<String, usize> = BTreeMap::new();
    for (sample, report) in samples.iter().zip(&reports) {
        if report.passed {
            let mut kept = sample.clone();
            kept.validated = true;
            survivors.push(kept);
        } else {
            let rules: BTreeSet<Rule> = report.violations.iter().map(|v| v.rule).collect();
            for rule in rules {
                *rule_counts.entry(rule_name(rule).to_string()).or_insert(0) += 1;
            }
        }
    }

    let summary = ValidateSummary {
        input: samples.len(),
        passed: survivors.len(),
        rejected: samples.len() - survivors.len(),
        rule_counts,
    };
    survivors.sort_by(|a, b| a.id.cmp(&b.id));
    write_corpus(&args.out, &survivors)?;
    let mut payload = serde_json::to_string(&summary).expect("serializes");
    payload.push('\n');
    Ok(payload)
}

// --------------------------------------------------------------------- score

#[derive(Debug, Args)]
pub struct ScoreArgs {
    /// Candidate corpus (JSONL) or single code file.
    #[arg(long, value_name = "FILE")]
    pub candidate: PathBuf,
    /// Reference corpus (JSONL) or single code file.
    #[arg(long, value_name = "FILE")]
    pub reference: PathBuf,
    /// Component weights "bleu,weighted,ast,dataflow"; must sum to 1.
    #[arg(long)]
    pub weights: Option<String>,
    /// CSV destination in corpus mode, JSON in file mode.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

enum ScoreSide {
    Corpus(Vec<WorkflowSample>),
    Code(String),
}

fn load_score_side(path: &Path) -> Result<ScoreSide, CliError> {
    let text = read_text(path)?;
    let looks_jsonl = text.trim_start().starts_with('{');
    if looks_jsonl {
        let mut samples = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match serde_json::from_str::<WorkflowSample>(line) {
                Ok(sample) => samples.push(sample),
                Err(_) => return Ok(ScoreSide::Code(text)),
            }
        }
        return Ok(ScoreSide::Corpus(samples));
    }
    Ok(ScoreSide::Code(text))
}

fn parse_weights(flag: Option<&str>, cfg: &PipelineConfig) -> Result<[f64; 4], CliError> {
    let weights = match flag {
        None => cfg.weights,
        Some(text) => {
            let parts: Vec<f64> = text
                .split(',')
                .map(|p| p.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| CliError::Usage(format!("bad --weights {text:?}: {e}")))?;
            let four: [f64; 4] = parts.try_into().map_err(|v: Vec<f64>| {
                CliError::Usage(format!("--weights needs 4 values, got {}", v.len()))
            })?;
            four
        }
    };
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        return Err(CliError::Usage(format!("weights must sum to 1, got {sum}")));
    }
    Ok(weights)
}

pub fn cmd_score(args: &ScoreArgs, cfg: &PipelineConfig) -> Result<String, CliError> {
    let weights = parse_weights(args.weights.as_deref(), cfg)?;
    let candidate = load_score_side(&args.candidate)?;
    let reference = load_score_side(&args.reference)?;
    match (candidate, reference) {
        (ScoreSide::Code(cand), ScoreSide::Code(reference)) => {
            let report = codebleu_with(&cand, &reference, weights)?;
            let mut payload = serde_json::to_string(&report).expect("serializes");
            payload.push('\n');
            deliver(args.out.as_deref(), payload)
        }
        (ScoreSide::Corpus(cand), ScoreSide::Corpus(reference)) => {
            let csv = score_corpora(&cand, &reference, weights, cfg)?;
            deliver(args.out.as_deref(), csv)
        }
        _ => Err(CliError::Usage(
            "candidate and reference must both be corpora or both be code files".to_string(),
        )),
    }
}

fn score_corpora(
    candidates: &[WorkflowSample],
    references: &[WorkflowSample],
    weights: [f64; 4],
    cfg: &PipelineConfig,
) -> Result<String, CliError> {
    let by_id: BTreeMap<&str, &WorkflowSample> =
        references.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut pairs: Vec<(&WorkflowSample, &WorkflowSample)> = Vec::new();
    let mut unpaired: Vec<&str> = Vec::new();
    let mut seen: BTreeSet<&str> = BTreeSet::new();
    for cand in candidates {
        seen.insert(cand.id.as_str());
        match by_id.get(cand.id.as_str()) {
            Some(reference) => pairs.push((cand, reference)),
            None => unpaired.push(&cand.id),
        }
    }
    unpaired.extend(references.iter().filter(|r| !seen.contains(r.id.as_str())).map(|r| r.id.as_str()));
    if !unpaired.is_empty() {
        log::warn!("excluding {} unpaired ids: {}", unpaired.len(), unpaired.join(", "));
    }
    if pairs.is_empty() {
        return Err(CliError::Data("no paired sample ids to score".to_string()));
    }
    pairs.sort_by_key(|(c, _)| c.id.as_str());

    let reports: Vec<Result<MetricReport, _>> =
        pool::map_ordered(&pairs, cfg.effective_workers(), |(cand, reference)| {
            codebleu_with(&cand.code, &reference.code, weights)
        });

    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record([
            "id",
            "bleu",
            "weighted_ngram",
            "ast_match",
            "dataflow_match",
            "codebleu",
            "candidate_parse_failed",
            "reference_parse_failed",
        ])
        .expect("csv header");
    let mut sums = [0.0f64; 7];
    let n = pairs.len() as f64;
    for ((cand, _), report) in pairs.iter().zip(reports) {
        let report = report?;
        let row = [
            report.bleu,
            report.weighted_ngram,
            report.ast_match,
            report.dataflow_match,
            report.codebleu,
            if report.candidate_parse_failed { 1.0 } else { 0.0 },
            if report.reference_parse_failed { 1.0 } else { 0.0 },
        ];
        for (sum, value) in sums.iter_mut().zip(row) {
            *sum += value;
        }
        let mut record = vec![cand.id.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        writer.write_record(&record).expect("csv row");
    }
    let mut mean = vec!["mean".to_string()];
    mean.extend(sums.iter().map(|s| (s / n).to_string()));
    writer.write_record(&mean).expect("csv mean");
    String::from_utf8(writer.into_inner().expect("csv flush")).map_err(|e| {
        CliError::Data(format!("scores are not valid UTF-8: {e}"))
    })
}

// --------------------------------------------------------------------- stats

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    /// Resolves owning apps exactly; omitted, the app of an API id is
    /// approximated from its dotted prefix.
    #[arg(long, value_name = "FILE")]
    pub registry: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

pub fn cmd_stats(args: &StatsArgs, _cfg: &PipelineConfig) -> Result<String, CliError> {
    let samples = read_corpus(&args.corpus)?;
    let registry = match &args.registry {
        Some(path) => Some(load_registry_file(path)?),
        None => None,
    };
    let stats = compute_stats(&samples, registry.as_ref());
    let mut payload = serde_json::to_string(&stats).expect("serializes");
    payload.push('\n');
    deliver(args.out.as_deref(), payload)
}

// ------------------------------------------------------------------ passrate

#[derive(Debug, Args)]
pub struct PassrateArgs {
    #[arg(long, value_name = "FILE")]
    pub corpus: PathBuf,
    #[arg(long, value_name = "FILE")]
    pub registry: PathBuf,
    /// Destination for per-sample verdicts.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub mock: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRow {
    pub id: String,
    pub pass: bool,
    /// True when the evaluator response had no parseable verdict; such
    /// samples count as failures.
    #[serde(default)]
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassrateSummary {
    pub pass_rate: f64,
    pub passes: usize,
    pub total: usize,
    pub flagged: usize,
}

pub fn cmd_passrate(args: &PassrateArgs, cfg: &PipelineConfig) -> Result<String, CliError> {
    let samples = read_corpus(&args.corpus)?;
    if samples.is_empty() {
        return Err(CliError::Data(format!("corpus {} is empty", args.corpus.display())));
    }
    let registry = load_registry_file(&args.registry)?;
    let gateway = build_gateway(args.mock.as_deref(), cfg)?;

    let outcomes = pool::map_ordered(&samples, cfg.effective_workers(), |sample| {
        let apis = docs_block(&registry, &sample.api_docs);
        let bindings = BTreeMap::from([
            ("query", sample.query.as_str()),
            ("apis", apis.as_str()),
            ("code", sample.code.as_str()),
        ]);
        let prompt = render_prompt(TemplateName::Evaluator, &bindings)?;
        let response = ask(&gateway, cfg, prompt)?;
        Ok(match parse_verdict(&response) {
            Ok(verdict) => (verdict.pass, false),
            Err(VerdictParseError) => (false, true),
        })
    });

    let mut rows = Vec::with_capacity(samples.len());
    for (sample, outcome) in samples.iter().zip(outcomes) {
        let (pass, flagged): (bool, bool) = outcome.map_err(|e: CliError| e)?;
        rows.push(VerdictRow { id: sample.id.clone(), pass, flagged });
    }

    let passes = rows.iter().filter(|r| r.pass).count();
    let flagged = rows.iter().filter(|r| r.flagged).count();
    let summary = PassrateSummary {
        pass_rate: passes as f64 / rows.len() as f64,
        passes,
        total: rows.len(),
        flagged,
    };
    if let Some(path) = &args.out {
        let mut ordered: Vec<&VerdictRow> = rows.iter().collect();
        ordered.sort_by_key(|r| r.id.as_str());
        let mut text = String::new();
        for row in ordered {
            text.push_str(&serde_json::to_string(row).expect("serializes"));
            text.push('\n');
        }
        write_text(path, &text)?;
    }
    let mut payload = serde_json::to_string(&summary).expect("serializes");
    payload.push('\n');
    Ok(payload)
}

// ----------------------------------------------------------------- agreement

#[derive(Debug, Args)]
pub struct AgreementArgs {
    /// First verdict file (JSONL of {id, pass}).
    #[arg(long, value_name = "FILE")]
    pub a: PathBuf,
    /// Second verdict file over the same ids.
    #[arg(long, value_name = "FILE")]
    pub b: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementSummary {
    pub agreement_rate: f64,
    pub matches: usize,
    pub total: usize,
}

fn read_verdicts(path: &Path) -> Result<BTreeMap<String, bool>, CliError> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: VerdictRow = serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!("{}:{}: bad verdict row: {e}", path.display(), i + 1))
        })?;
        out.insert(row.id, row.pass);
    }
    Ok(out)
}

pub fn cmd_agreement(args: &AgreementArgs, _cfg: &PipelineConfig) -> Result<String, CliError> {
    let a = read_verdicts(&args.a)?;
    let b = read_verdicts(&args.b)?;
    let only_a: Vec<&str> = a.keys().filter(|k| !b.contains_key(*k)).map(|k| k.as_str()).collect();
    let only_b: Vec<&str> = b.keys().filter(|k| !a.contains_key(*k)).map(|k| k.as_str()).collect();
    if !only_a.is_empty() || !only_b.is_empty() {
        return Err(CliError::Data(format!(
            "verdict files cover different ids ({} only in --a, {} only in --b)",
            only_a.len(),
            only_b.len()
        )));
    }
    let labels_a: Vec<bool> = a.values().copied().collect();
    let labels_b: Vec<bool> = b.values().copied().collect();
    let rate = agreement_rate(&labels_a, &labels_b)?;
    let matches = labels_a.iter().zip(&labels_b).filter(|(x, y)| x == y).count();
    let summary = AgreementSummary { agreement_rate: rate, matches, total: labels_a.len() };
    let mut payload = serde_json::to_string(&summary).expect("serializes");
    payload.push('\n');
    Ok(payload)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::fs;
    use tempfile::TempDir;

    const GOLDEN_PLIST: &[u8] = include_bytes!("../tests/fixtures/golden_workflow.plist");
    const CASE_REGISTRY: &str = include_str!("../tests/fixtures/registry_case.json");
    const SAMPLING_REGISTRY: &str = include_str!("../tests/fixtures/registry_sampling.json");

    fn cfg() -> PipelineConfig {
        PipelineConfig { workers: 2, ..Default::default() }
    }

    struct Dir {
        dir: TempDir,
    }

    impl Dir {
        fn new() -> Self {
            Dir { dir: tempfile::tempdir().unwrap() }
        }

        fn file(&self, name: &str, content: impl AsRef<[u8]>) -> PathBuf {
            let path = self.dir.path().join(name);
            fs::write(&path, content).unwrap();
            path
        }

        fn path(&self, name: &str) -> PathBuf {
            self.dir.path().join(name)
        }
    }

    const GOLDEN_CODE: &str = "\
var_1 = is_workflow_actions_count(WFCountType='Items')
if var_1 == '0':
    var_2 = is_workflow_actions_url(WFURLActionURL='https://www.amazon.com/gp/history')
    is_workflow_actions_showwebpage(WFURL=var_2)
else:
    var_3 = is_workflow_actions_getvariable(WFVariable=f'{input(\"Please enter the value:\")}')
    var_4 = is_workflow_actions_detect_link(WFInput=var_3)
    var_5 = is_workflow_actions_getitemfromlist(WFInput=var_4)
    is_workflow_actions_showwebpage(WFURL=var_5)
var_6 = is_workflow_actions_getmyworkflows()
if 'UpdateKit' in var_6:
    is_workflow_actions_runworkflow(WFInput={'Current Version': '1.0', 'RoutineHub ID': '1360', 'Shortcut Name': 'Buy Kindle Book'}, WFShowWorkflow=False, WFWorkflowName='UpdateKit')
";

    #[test]
    fn transcribe_golden_plist_deterministically() {
        let dir = Dir::new();
        let input = dir.file("golden.plist", GOLDEN_PLIST);
        let out = dir.path("sample.json");
        let args = TranscribeArgs {
            input,
            registry: None,
            rename: RenameMode::Deterministic,
            id: Some("golden".to_string()),
            out: Some(out.clone()),
            mock: None,
        };
        cmd_transcribe(&args, &cfg()).unwrap();
        let sample = read_sample(&out).unwrap();
        assert_eq!(sample.code, GOLDEN_CODE);
        assert_eq!(sample.api_docs.len(), 8);
        assert!(sample.api_docs.contains(&"is.workflow.actions.detect.link".to_string()));
    }

    #[test]
    fn transcribe_refuses_binary_parameters() {
        let dir = Dir::new();
        let doc = r#"{"WFWorkflowActions": [
            {"WFWorkflowActionIdentifier": "a.x",
             "WFWorkflowActionParameters": {"WFImage": "b'x'"}}
        ]}"#;
        let input = dir.file("binary.json", doc);
        let args = TranscribeArgs {
            input,
            registry: None,
            rename: RenameMode::Deterministic,
            id: None,
            out: None,
            mock: None,
        };
        match cmd_transcribe(&args, &cfg()) {
            Err(CliError::Data(message)) => {
                assert!(message.contains("action 0 key WFImage"), "{message}");
            }
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn transcribe_empty_shortcut_gives_empty_code() {
        let dir = Dir::new();
        let input = dir.file("empty.json", r#"{"WFWorkflowActions": []}"#);
        let args = TranscribeArgs {
            input,
            registry: None,
            rename: RenameMode::Deterministic,
            id: Some("empty".to_string()),
            out: None,
            mock: None,
        };
        let payload = cmd_transcribe(&args, &cfg()).unwrap();
        let sample: WorkflowSample = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!(sample.code, "");
        assert!(sample.api_docs.is_empty());
    }

    #[test]
    fn transcribe_llm_rename_round_trip() {
        let dir = Dir::new();
        let doc = r#"{"WFWorkflowActions": [
            {"WFWorkflowActionIdentifier": "is.workflow.actions.count",
             "WFWorkflowActionParameters": {"WFCountType": "Items", "UUID": "U1"}},
            {"WFWorkflowActionIdentifier": "is.workflow.actions.showwebpage",
             "WFWorkflowActionParameters": {
                "WFURL": {"Value": {"OutputUUID": "U1", "Type": "ActionOutput"},
                          "WFSerializationType": "WFTextTokenAttachment"}}}
        ]}"#;
        let input = dir.file("two.json", doc);
        let mock = dir.file(
            "mock.json",
            r#"[{"prompt_contains": "renaming variable names",
                 "response": "{\"var_1\": \"workflow action count\"}"}]"#,
        );
        let out = dir.path("renamed.json");
        let args = TranscribeArgs {
            input,
            registry: None,
            rename: RenameMode::Llm,
            id: Some("two".to_string()),
            out: Some(out.clone()),
            mock: Some(mock),
        };
        cmd_transcribe(&args, &cfg()).unwrap();
        let sample = read_sample(&out).unwrap();
        assert_eq!(
            sample.code,
            "workflow_action_count = is_workflow_actions_count(WFCountType='Items')\n\
             is_workflow_actions_showwebpage(WFURL=workflow_action_count)\n"
        );
    }

    const THOUGHTS_CODE: &str = "\
a = is_workflow_actions_count(WFCountType='Items')
if a == '0':
    is_workflow_actions_showwebpage(WFURL=a)
";

    /// The plan rule is keyed on an interleaved comment, so it only
    /// matches if the plan prompt consumed the comment output.
    const THOUGHTS_MOCK: &str = r##"[
        {"prompt_contains": "patient assistant",
         "response": "```json\n{\"line 1\": \"Count items.\", \"line 2\": \"Branch when empty.\", \"line 3\": \"Show the page.\"}\n```"},
        {"prompt_contains": "craft a query based on the examples",
         "response": "How do I open a page when I have no items?"},
        {"prompt_contains": "# Count items.",
         "response": "1. Count items.\n2. Branch on the result."}
    ]"##;

    #[test]
    fn thoughts_fills_comments_plan_query_in_order() {
        let dir = Dir::new();
        let mut input = WorkflowSample::new("w1");
        input.code = THOUGHTS_CODE.to_string();
        let sample = dir.file("sample.json", sample_line(&input));
        let mock = dir.file("mock.json", THOUGHTS_MOCK);
        let out = dir.path("filled.json");
        let args = ThoughtsArgs {
            sample,
            corpus: None,
            out: Some(out.clone()),
            mock: Some(mock),
            force: false,
        };
        cmd_thoughts(&args, &cfg()).unwrap();
        let filled = read_sample(&out).unwrap();
        assert_eq!(
            filled.code,
            "# Count items.\n\
             a = is_workflow_actions_count(WFCountType='Items')\n\
             # Branch when empty.\n\
             if a == '0':\n\
             \x20   # Show the page.\n\
             \x20   is_workflow_actions_showwebpage(WFURL=a)\n"
        );
        assert_eq!(filled.plan, "1. Count items.\n2. Branch on the result.");
        assert_eq!(filled.query, "How do I open a page when I have no items?");

        // Byte-reproducible on a second run.
        let first = fs::read(&out).unwrap();
        cmd_thoughts(&ThoughtsArgs { force: true, ..args }, &cfg()).unwrap();
        assert_eq!(fs::read(&out).unwrap(), first);
    }

    #[test]
    fn thoughts_refuses_refill_without_force() {
        let dir = Dir::new();
        let mut input = WorkflowSample::new("w1");
        input.code = THOUGHTS_CODE.to_string();
        input.query = "existing".to_string();
        let sample = dir.file("sample.json", sample_line(&input));
        let mock = dir.file("mock.json", THOUGHTS_MOCK);
        let args = ThoughtsArgs {
            sample,
            corpus: None,
            out: None,
            mock: Some(mock),
            force: false,
        };
        match cmd_thoughts(&args, &cfg()) {
            Err(CliError::Data(message)) => assert!(message.contains("--force"), "{message}"),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn thoughts_aborts_on_unparseable_code() {
        let dir = Dir::new();
        let mut input = WorkflowSample::new("w1");
        input.code = "if (\n".to_string();
        let sample = dir.file("sample.json", sample_line(&input));
        let before = fs::read(&sample).unwrap();
        let mock = dir.file("mock.json", THOUGHTS_MOCK);
        let args = ThoughtsArgs {
            sample: sample.clone(),
            corpus: None,
            out: None,
            mock: Some(mock),
            force: false,
        };
        match cmd_thoughts(&args, &cfg()) {
            Err(CliError::Data(message)) => assert!(message.contains("does not parse")),
            other => panic!("expected data error, got {other:?}"),
        }
        assert_eq!(fs::read(&sample).unwrap(), before, "input must stay untouched");
    }

    const EXPAND_MOCK: &str = r#"[
        {"prompt_contains": "gain inspiration from the following api docs",
         "response": "Could you forecast my commute weather and message it to a friend?"}
    ]"#;

    fn annotated_corpus_line() -> String {
        sample_line(&seed_sample())
    }

    #[test]
    fn expand_draws_deterministically_under_a_seed() {
        let dir = Dir::new();
        let registry = dir.file("registry.json", SAMPLING_REGISTRY);
        let corpus = dir.file("corpus.jsonl", annotated_corpus_line());
        let mock = dir.file("mock.json", EXPAND_MOCK);
        let out_a = dir.path("a.json");
        let out_b = dir.path("b.json");
        let mut args = ExpandArgs {
            registry,
            corpus,
            category: "Health & Fitness".to_string(),
            napis: Some(6),
            seed: 11,
            icl: None,
            out: Some(out_a.clone()),
            mock: Some(mock),
        };
        cmd_expand(&args, &cfg()).unwrap();
        args.out = Some(out_b.clone());
        cmd_expand(&args, &cfg()).unwrap();
        assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());

        let record: ExpandRecord =
            serde_json::from_str(fs::read_to_string(&out_a).unwrap().trim()).unwrap();
        assert_eq!(record.id, "synth-health-fitness-00000011");
        // The drawn apps may hold fewer APIs than requested; the record
        // accounts for every missing slot.
        assert_eq!(record.api_docs.len() + record.shortfall, 6);
        let builtin = record
            .api_docs
            .iter()
            .filter(|id| id.starts_with("is.workflow.actions."))
            .count();
        assert_eq!(builtin, 3);
        assert_eq!(record.seed, 11);
        assert!(record.query.starts_with("Could you forecast"));
        assert!((1..=5).contains(&record.apps.len()));
    }

    #[test]
    fn expand_rejects_unknown_category() {
        let dir = Dir::new();
        let registry = dir.file("registry.json", SAMPLING_REGISTRY);
        let corpus = dir.file("corpus.jsonl", annotated_corpus_line());
        let args = ExpandArgs {
            registry,
            corpus,
            category: "Skulduggery".to_string(),
            napis: None,
            seed: 0,
            icl: None,
            out: None,
            mock: None,
        };
        match cmd_expand(&args, &cfg()) {
            Err(CliError::Usage(message)) => assert!(message.contains("Skulduggery")),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn expand_needs_a_nonempty_corpus() {
        let dir = Dir::new();
        let registry = dir.file("registry.json", SAMPLING_REGISTRY);
        let corpus = dir.file("corpus.jsonl", "");
        let args = ExpandArgs {
            registry,
            corpus,
            category: "Business".to_string(),
            napis: None,
            seed: 0,
            icl: None,
            out: None,
            mock: None,
        };
        match cmd_expand(&args, &cfg()) {
            Err(CliError::Data(message)) => assert!(message.contains("empty")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    fn refinable_sample() -> WorkflowSample {
        let mut sample = WorkflowSample::new("r1");
        sample.query = "Count my items.".to_string();
        sample.plan = "1. Count.".to_string();
        sample.code = "x = is_workflow_actions_count(WFCountType='Items')\n".to_string();
        sample.api_docs = vec!["is.workflow.actions.count".to_string()];
        sample
    }

    #[test]
    fn refine_applies_a_well_formed_response() {
        let dir = Dir::new();
        let sample = dir.file("sample.json", sample_line(&refinable_sample()));
        let mock = dir.file(
            "mock.json",
            r##"[{"prompt_contains": "polishing tool calling plan",
                 "response": "```json\n{\"thought\": \"1. Count the items.\", \"code\": \"# Count the items.\\nitem_count = is_workflow_actions_count(WFCountType='Items')\\n\"}\n```"}]"##,
        );
        let out = dir.path("refined.json");
        let args = RefineArgs {
            sample,
            registry: None,
            corpus: None,
            out: Some(out.clone()),
            mock: Some(mock),
        };
        cmd_refine(&args, &cfg()).unwrap();
        let refined = read_sample(&out).unwrap();
        assert_eq!(refined.plan, "1. Count the items.");
        assert_eq!(
            refined.code,
            "# Count the items.\nitem_count = is_workflow_actions_count(WFCountType='Items')\n"
        );
    }

    #[test]
    fn refine_keeps_original_when_response_is_not_json() {
        let dir = Dir::new();
        let original = refinable_sample();
        let sample = dir.file("sample.json", sample_line(&original));
        let mock = dir.file(
            "mock.json",
            r#"[{"prompt_contains": "polishing tool calling plan",
                 "response": "I would tidy the plan and align the calls."}]"#,
        );
        let out = dir.path("refined.json");
        let args = RefineArgs {
            sample,
            registry: None,
            corpus: None,
            out: Some(out.clone()),
            mock: Some(mock),
        };
        cmd_refine(&args, &cfg()).unwrap();
        assert_eq!(read_sample(&out).unwrap(), original);
    }

    #[test]
    fn refine_rejects_code_that_does_not_parse() {
        let dir = Dir::new();
        let original = refinable_sample();
        let sample = dir.file("sample.json", sample_line(&original));
        let mock = dir.file(
            "mock.json",
            r#"[{"prompt_contains": "polishing tool calling plan",
                 "response": "{\"thought\": \"p\", \"code\": \"if (:\\n\"}"}]"#,
        );
        let out = dir.path("refined.json");
        let args = RefineArgs {
            sample,
            registry: None,
            corpus: None,
            out: Some(out.clone()),
            mock: Some(mock),
        };
        cmd_refine(&args, &cfg()).unwrap();
        assert_eq!(read_sample(&out).unwrap(), original);
    }

    #[test]
    fn refine_requires_code_and_plan() {
        let dir = Dir::new();
        let mut bare = WorkflowSample::new("r2");
        bare.code = "f()\n".to_string();
        let sample = dir.file("sample.json", sample_line(&bare));
        let args = RefineArgs {
            sample,
            registry: None,
            corpus: None,
            out: None,
            mock: None,
        };
        match cmd_refine(&args, &cfg()) {
            Err(CliError::Data(message)) => assert!(message.contains("code and plan")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    fn validatable(id: &str, code: &str, api_docs: &[&str]) -> WorkflowSample {
        let mut sample = WorkflowSample::new(id);
        sample.code = code.to_string();
        sample.api_docs = api_docs.iter().map(|s| s.to_string()).collect();
        sample
    }

    #[test]
    fn validate_filters_the_hallucinating_sample() {
        let dir = Dir::new();
        let registry = dir.file("registry.json", CASE_REGISTRY);
        let good = "x = is_workflow_actions_count(WFCountType='Items')\n";
        let corpus = corpus::corpus_to_string(&[
            validatable("ok-1", good, &["is.workflow.actions.count"]),
            validatable("bad", "made_up_api()\n", &["is.workflow.actions.count"]),
            validatable("ok-2", good, &["is.workflow.actions.count"]),
        ]);
        let corpus = dir.file("corpus.jsonl", corpus);
        let out = dir.path("survivors.jsonl");
        let args = ValidateArgs { corpus, registry, out: out.clone() };
        let payload = cmd_validate(&args, &cfg()).unwrap();
        let summary: ValidateSummary = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!(summary.input, 3);
        assert_eq!(summary.passed, 2);
        assert_eq!(summary.rule_counts.get("HallucinatedApi"), Some(&1));

        let survivors = read_corpus(&out).unwrap();
        let ids: Vec<&str> = survivors.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(ids, ["ok-1", "ok-2"]);
        assert!(survivors.iter().all(|s| s.validated));
    }

    #[test]
    fn validate_empty_and_all_passing_corpora() {
        let dir = Dir::new();
        let registry = dir.file("registry.json", CASE_REGISTRY);
        let corpus = dir.file("empty.jsonl", "");
        let out = dir.path("out.jsonl");
        let args = ValidateArgs { corpus, registry: registry.clone(), out: out.clone() };
        let payload = cmd_validate(&args, &cfg()).unwrap();
        let summary: ValidateSummary = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!((summary.input, summary.passed, summary.rejected), (0, 0, 0));
        assert!(summary.rule_counts.is_empty());

        let mut seed = seed_sample();
        seed.code = strip_comment_lines(&seed.code);
        let corpus = dir.file("all.jsonl", corpus::corpus_to_string(&[seed.clone()]));
        let args = ValidateArgs { corpus, registry, out: out.clone() };
        let payload = cmd_validate(&args, &cfg()).unwrap();
        let summary: ValidateSummary = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!(summary.passed, 1);
        let survivors = read_corpus(&out).unwrap();
        assert_eq!(survivors[0].id, seed.id);
    }

    #[test]
    fn score_identity_corpus_means_one() {
        let dir = Dir::new();
        let mut a = seed_sample();
        a.id = "s1".to_string();
        let mut b = WorkflowSample::new("s2");
        b.code = "f()\ng()\n".to_string();
        let corpus = corpus::corpus_to_string(&[a, b]);
        let cand = dir.file("cand.jsonl", &corpus);
        let reference = dir.file("ref.jsonl", &corpus);
        let args = ScoreArgs { candidate: cand, reference, weights: None, out: None };
        let payload = cmd_score(&args, &cfg()).unwrap();
        let mean = payload.lines().last().unwrap();
        let fields: Vec<&str> = mean.split(',').collect();
        assert_eq!(fields[0], "mean");
        let codebleu: f64 = fields[5].parse().unwrap();
        assert!((codebleu - 1.0).abs() < 1e-9, "{codebleu}");
        assert_eq!(payload.lines().count(), 4, "header, two rows, mean");
    }

    #[test]
    fn score_excludes_unpaired_ids() {
        let dir = Dir::new();
        let mut shared = WorkflowSample::new("shared");
        shared.code = "f()\n".to_string();
        let mut extra = WorkflowSample::new("extra");
        extra.code = "g()\n".to_string();
        let cand = dir.file("cand.jsonl", corpus::corpus_to_string(&[shared.clone(), extra]));
        let reference = dir.file("ref.jsonl", corpus::corpus_to_string(&[shared]));
        let args = ScoreArgs { candidate: cand, reference, weights: None, out: None };
        let payload = cmd_score(&args, &cfg()).unwrap();
        assert_eq!(payload.lines().count(), 3, "header, one row, mean");
        assert!(payload.contains("shared"));
        assert!(!payload.contains("extra"));
    }

    #[test]
    fn score_weights_flag_recombines_components() {
        let dir = Dir::new();
        let mut cand = WorkflowSample::new("p");
        cand.code = "f()\ng()\n".to_string();
        let mut reference = WorkflowSample::new("p");
        reference.code = "f()\nh()\nk()\n".to_string();
        let cand = dir.file("cand.jsonl", sample_line(&cand));
        let reference = dir.file("ref.jsonl", sample_line(&reference));
        let args = ScoreArgs {
            candidate: cand,
            reference,
            weights: Some("0.25, 0.25, 0.25, 0.25".to_string()),
            out: None,
        };
        let payload = cmd_score(&args, &cfg()).unwrap();
        let row: Vec<&str> = payload.lines().nth(1).unwrap().split(',').collect();
        let get = |i: usize| row[i].parse::<f64>().unwrap();
        let expected = 0.25 * get(1) + 0.25 * get(2) + 0.25 * get(3) + 0.25 * get(4);
        assert!((get(5) - expected).abs() < 1e-12);
    }

    #[test]
    fn score_rejects_bad_weights_and_empty_pairings() {
        let dir = Dir::new();
        let a = dir.file("a.jsonl", sample_line(&WorkflowSample::new("a")));
        let b = dir.file("b.jsonl", sample_line(&WorkflowSample::new("b")));
        let args = ScoreArgs {
            candidate: a.clone(),
            reference: b.clone(),
            weights: Some("0.5,0.5,0.5,0.5".to_string()),
            out: None,
        };
        match cmd_score(&args, &cfg()) {
            Err(CliError::Usage(message)) => assert!(message.contains("sum to 1")),
            other => panic!("expected usage error, got {other:?}"),
        }
        let args = ScoreArgs { candidate: a, reference: b, weights: None, out: None };
        match cmd_score(&args, &cfg()) {
            Err(CliError::Data(message)) => assert!(message.contains("no paired")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn score_plain_code_files_give_one_report() {
        let dir = Dir::new();
        let cand = dir.file("cand.py", "f()\n");
        let reference = dir.file("ref.py", "f()\n");
        let args = ScoreArgs { candidate: cand, reference, weights: None, out: None };
        let payload = cmd_score(&args, &cfg()).unwrap();
        let report: MetricReport = serde_json::from_str(payload.trim()).unwrap();
        assert!((report.codebleu - 1.0).abs() < 1e-12);
    }

    #[test]
    fn stats_command_reports_the_fixture_numbers() {
        let dir = Dir::new();
        let mut s2 = WorkflowSample::new("loops");
        s2.code = "a = f()\nfor i in range(2):\n    b = g()\n    c = h()\n".to_string();
        let corpus = dir.file("corpus.jsonl", corpus::corpus_to_string(&[seed_sample(), s2]));
        let args = StatsArgs { corpus, registry: None, out: None };
        let payload = cmd_stats(&args, &cfg()).unwrap();
        let stats: corpus::CorpusStats = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!(stats.avg_action, 6.0);
        assert_eq!(stats.avg_if, 1.0);
        assert_eq!(stats.avg_loop, 0.5);
        assert_eq!(stats.avg_nested_depth, 1.0);
    }

    fn passrate_fixture(codes_and_rules: &[(&str, &str)]) -> (Dir, PathBuf, PathBuf, PathBuf) {
        let dir = Dir::new();
        let registry = dir.file("registry.json", CASE_REGISTRY);
        let mut samples = Vec::new();
        let mut rules = Vec::new();
        for (i, (code, response)) in codes_and_rules.iter().enumerate() {
            let mut sample = WorkflowSample::new(&format!("v{i}"));
            sample.query = format!("task {i}");
            sample.code = code.to_string();
            samples.push(sample);
            rules.push(serde_json::json!({
                "prompt_contains": format!("task {i}"),
                "response": response,
            }));
        }
        let corpus = dir.file("corpus.jsonl", corpus::corpus_to_string(&samples));
        let mock = dir.file("mock.json", serde_json::to_string(&rules).unwrap());
        (dir, corpus, registry, mock)
    }

    #[test]
    fn passrate_three_of_four() {
        let (dir, corpus, registry, mock) = passrate_fixture(&[
            ("a()\n", "True, the code fits."),
            ("b()\n", "True."),
            ("c()\n", "My answer: True"),
            ("d()\n", "False. It ignores the query."),
        ]);
        let out = dir.path("verdicts.jsonl");
        let args = PassrateArgs { corpus, registry, out: Some(out.clone()), mock: Some(mock) };
        let payload = cmd_passrate(&args, &cfg()).unwrap();
        let summary: PassrateSummary = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!(summary.pass_rate, 0.75);
        assert_eq!((summary.passes, summary.total, summary.flagged), (3, 4, 0));

        let rows: Vec<VerdictRow> = fs::read_to_string(&out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(rows.len(), 4);
        assert!(!rows[3].pass);
    }

    #[test]
    fn passrate_flags_unparseable_verdicts_as_failures() {
        let (_dir, corpus, registry, mock) = passrate_fixture(&[
            ("a()\n", "True."),
            ("b()\n", "True."),
            ("c()\n", "True."),
            ("d()\n", "True."),
            ("e()\n", "The code is acceptable in spirit."),
        ]);
        let args = PassrateArgs { corpus, registry, out: None, mock: Some(mock) };
        let payload = cmd_passrate(&args, &cfg()).unwrap();
        let summary: PassrateSummary = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!(summary.pass_rate, 0.8);
        assert_eq!(summary.flagged, 1);
    }

    fn verdict_file(dir: &Dir, name: &str, labels: &[bool]) -> PathBuf {
        let mut text = String::new();
        for (i, pass) in labels.iter().enumerate() {
            let row = VerdictRow { id: format!("v{i:03}"), pass: *pass, flagged: false };
            text.push_str(&serde_json::to_string(&row).unwrap());
            text.push('\n');
        }
        dir.file(name, text)
    }

    #[test]
    fn agreement_268_of_330_rounds_to_0_812() {
        let dir = Dir::new();
        let a = verdict_file(&dir, "a.jsonl", &vec![true; 330]);
        let mut mixed = vec![true; 268];
        mixed.extend(vec![false; 62]);
        let b = verdict_file(&dir, "b.jsonl", &mixed);
        let args = AgreementArgs { a, b };
        let payload = cmd_agreement(&args, &cfg()).unwrap();
        let summary: AgreementSummary = serde_json::from_str(payload.trim()).unwrap();
        assert_eq!(summary.matches, 268);
        assert_eq!(summary.total, 330);
        assert_eq!((summary.agreement_rate * 1000.0).round() / 1000.0, 0.812);
    }

    #[test]
    fn agreement_requires_identical_id_sets() {
        let dir = Dir::new();
        let a = verdict_file(&dir, "a.jsonl", &[true, false]);
        let b = verdict_file(&dir, "b.jsonl", &[true, false, true]);
        let args = AgreementArgs { a, b };
        match cmd_agreement(&args, &cfg()) {
            Err(CliError::Data(message)) => assert!(message.contains("different ids")),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn category_slugs_are_path_safe() {
        assert_eq!(category_slug("Health & Fitness"), "health-fitness");
        assert_eq!(category_slug("Magazines & Newspapers"), "magazines-newspapers");
        assert_eq!(category_slug("Business"), "business");
    }

    #[test]
    fn comment_interleaving_matches_indentation() {
        let comments = BTreeMap::from([
            (1, "top".to_string()),
            (2, "multi\nline".to_string()),
        ]);
        let code = "f()\n    g()\n";
        assert_eq!(
            interleave_comments(code, &comments),
            "# top\nf()\n    # multi line\n    g()\n"
        );
    }

    #[test]
    fn strip_comment_lines_removes_only_full_line_comments() {
        let code = "# one\nf()\n  # two\n  g()\n";
        assert_eq!(strip_comment_lines(code), "f()\n  g()\n");
    }
}

//! Acceptance gate: one test per shipping criterion, each printing a
//! single PASS line when it holds. Tolerances are pinned here, not in
//! the library.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use flowforge_core::ast::{build_ast, AstNode};
use flowforge_core::emit::emit_code;
use flowforge_core::fuzzgen;
use flowforge_core::metrics::{agreement_rate, codebleu, codebleu_with};
use flowforge_core::naming::assign_names;
use flowforge_core::registry::{load_registry, ApiDoc, ApiRegistry};
use flowforge_core::validator::{validate, BuiltinAllowlist, Rule};
use flowforge_core::wfdsl::{
    self, extract_dataflow, to_ast, DslExpr, DslProgram, DslStmt, DslStmtKind,
};
use flowforge_cli::corpus::{corpus_to_string, seed_sample, CorpusStats, WorkflowSample};
use flowforge_cli::sampling::{sample_apis, SamplingConfig};
use rand_chacha::ChaCha8Rng;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn run_bin(args: &[&str]) -> Output {
    let output = Command::new(env!("CARGO_BIN_EXE_flowforge"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        output.status.success(),
        "flowforge {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&output.stderr)
    );
    output
}

/// Emitted text of a random well-nested workflow; the shared program
/// source for the metric criteria.
fn random_code(rng: &mut ChaCha8Rng, max_depth: usize, max_len: usize) -> String {
    let shortcut = fuzzgen::random_shortcut(rng, max_depth, max_len);
    let ast = build_ast(&shortcut).expect("generated shortcut builds");
    let plan = assign_names(&ast, None);
    emit_code(&ast, &plan).expect("generated workflow emits")
}

/// Statement-level call names in source order, the granularity the
/// transcription contract is stated in.
fn statement_calls(stmts: &[DslStmt], out: &mut Vec<String>) {
    for stmt in stmts {
        match &stmt.kind {
            DslStmtKind::Assign { expr, .. } | DslStmtKind::ExprStmt(expr) => {
                if let DslExpr::Call { name, .. } = expr {
                    out.push(name.clone());
                }
            }
            DslStmtKind::If { body, elifs, else_body, .. } => {
                statement_calls(body, out);
                for (_, b) in elifs {
                    statement_calls(b, out);
                }
                if let Some(b) = else_body {
                    statement_calls(b, out);
                }
            }
            DslStmtKind::ForIn { body, .. } | DslStmtKind::While { body, .. } => {
                statement_calls(body, out)
            }
            DslStmtKind::Match { cases, .. } => {
                for case in cases {
                    statement_calls(&case.body, out);
                }
            }
            DslStmtKind::Pass | DslStmtKind::Comment(_) => {}
        }
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
fn acceptance_1_golden_transcription() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("golden.json");
    let input = fixture("golden_workflow.plist");

    let start = Instant::now();
    run_bin(&[
        "transcribe",
        "--input",
        input.to_str().unwrap(),
        "--id",
        "golden",
        "--out",
        out.to_str().unwrap(),
    ]);
    let elapsed = start.elapsed();

    let line = std::fs::read_to_string(&out).unwrap();
    let sample: WorkflowSample = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(sample.code, GOLDEN_CODE, "transcription differs from the canonical listing");

    let program = wfdsl::parse(&sample.code).unwrap();
    let mut calls = Vec::new();
    statement_calls(&program.statements, &mut calls);
    assert_eq!(
        calls,
        [
            "is_workflow_actions_count",
            "is_workflow_actions_url",
            "is_workflow_actions_showwebpage",
            "is_workflow_actions_getvariable",
            "is_workflow_actions_detect_link",
            "is_workflow_actions_getitemfromlist",
            "is_workflow_actions_showwebpage",
            "is_workflow_actions_getmyworkflows",
            "is_workflow_actions_runworkflow",
        ],
        "call sequence differs"
    );

    let ifs: Vec<&DslStmtKind> = program
        .statements
        .iter()
        .filter(|s| matches!(s.kind, DslStmtKind::If { .. }))
        .map(|s| &s.kind)
        .collect();
    assert_eq!(ifs.len(), 2, "expected two top-level conditionals");
    let DslStmtKind::If { cond, elifs, else_body, .. } = ifs[0] else { unreachable!() };
    assert!(else_body.is_some(), "first conditional lost its else branch");
    assert!(elifs.is_empty());
    let DslExpr::Compare { op, rhs, .. } = cond else {
        panic!("first condition is not a comparison: {cond:?}");
    };
    assert_eq!(op, "==");
    assert_eq!(**rhs, DslExpr::StringLit("0".into()));
    let DslStmtKind::If { cond, else_body, .. } = ifs[1] else { unreachable!() };
    assert!(else_body.is_none());
    let DslExpr::Compare { op, lhs, .. } = cond else {
        panic!("second condition is not a comparison: {cond:?}");
    };
    assert_eq!(op, "in");
    assert_eq!(**lhs, DslExpr::StringLit("UpdateKit".into()));

    assert!(elapsed < Duration::from_secs(1), "transcription took {elapsed:?}");
    println!("ACCEPTANCE 1 golden_transcription: PASS");
}

#[test]
fn acceptance_2_metric_identity() {
    let mut rng = fuzzgen::rng(0xACC2);
    for case in 0..500 {
        let code = random_code(&mut rng, 4, 30);
        let report = codebleu(&code, &code).unwrap();
        assert!(
            (report.codebleu - 1.0).abs() <= 1e-9,
            "case {case}: self-score {} not 1\n{code}",
            report.codebleu
        );
    }

    // The published composite is exactly the weighted component sum.
    let weights = [0.1, 0.1, 0.4, 0.4];
    for case in 0..120 {
        let candidate = random_code(&mut rng, 4, 30);
        let reference = random_code(&mut rng, 4, 30);
        let report = codebleu_with(&candidate, &reference, weights).unwrap();
        let by_hand = weights[0] * report.bleu
            + weights[1] * report.weighted_ngram
            + weights[2] * report.ast_match
            + weights[3] * report.dataflow_match;
        assert!(
            (report.codebleu - by_hand).abs() <= 1e-12,
            "case {case}: {} vs {}",
            report.codebleu,
            by_hand
        );
    }

    // An identical unparseable pair scores (1, 1, 0, 0), and
    // 0.1 + 0.1 is exact in binary floating point.
    let garbled = "def f(:\n";
    let report = codebleu(garbled, garbled).unwrap();
    assert!(report.candidate_parse_failed && report.reference_parse_failed);
    assert_eq!(report.bleu, 1.0);
    assert_eq!(report.weighted_ngram, 1.0);
    assert_eq!(report.ast_match, 0.0);
    assert_eq!(report.dataflow_match, 0.0);
    assert_eq!(report.codebleu, 0.2);
    println!("ACCEPTANCE 2 metric_identity: PASS");
}

// Independent oracles for the structural components: subtrees render to
// nested-paren strings and matching is greedy removal from a plain list,
// a representation disjoint from the library's preorder-arity multisets.

fn oracle_render(node: &AstNode) -> String {
    let inner: Vec<String> = node.children.iter().map(oracle_render).collect();
    format!("{:?}({})", node.kind, inner.join(","))
}

fn oracle_subtrees(p: &DslProgram) -> Vec<String> {
    fn walk(node: &AstNode, out: &mut Vec<String>) {
        out.push(oracle_render(node));
        for child in &node.children {
            walk(child, out);
        }
    }
    let mut out = Vec::new();
    for child in &to_ast(p).root.children {
        walk(child, &mut out);
    }
    out
}

fn oracle_clipped<T: PartialEq + Clone>(reference: &[T], candidate: &[T]) -> usize {
    let mut pool: Vec<T> = candidate.to_vec();
    let mut matched = 0;
    for item in reference {
        if let Some(pos) = pool.iter().position(|c| c == item) {
            pool.remove(pos);
            matched += 1;
        }
    }
    matched
}

fn oracle_ast_match(candidate: &DslProgram, reference: &DslProgram) -> f64 {
    let r = oracle_subtrees(reference);
    let c = oracle_subtrees(candidate);
    if r.is_empty() {
        return 1.0;
    }
    oracle_clipped(&r, &c) as f64 / r.len() as f64
}

fn oracle_dataflow_match(candidate: &DslProgram, reference: &DslProgram) -> f64 {
    let r = extract_dataflow(reference);
    let c = extract_dataflow(candidate);
    if r.is_empty() {
        return 1.0;
    }
    oracle_clipped(&r, &c) as f64 / r.len() as f64
}

fn count_stmts(stmts: &[DslStmt]) -> usize {
    stmts
        .iter()
        .map(|s| {
            1 + match &s.kind {
                DslStmtKind::If { body, elifs, else_body, .. } => {
                    count_stmts(body)
                        + elifs.iter().map(|(_, b)| count_stmts(b)).sum::<usize>()
                        + else_body.as_ref().map_or(0, |b| count_stmts(b))
                }
                DslStmtKind::ForIn { body, .. } | DslStmtKind::While { body, .. } => {
                    count_stmts(body)
                }
                DslStmtKind::Match { cases, .. } => {
                    cases.iter().map(|c| count_stmts(&c.body)).sum()
                }
                _ => 0,
            }
        })
        .sum()
}

#[test]
fn acceptance_3_oracle_equivalence() {
    fn small_program(rng: &mut ChaCha8Rng) -> DslProgram {
        loop {
            let program = wfdsl::parse(&random_code(rng, 3, 10)).unwrap();
            if count_stmts(&program.statements) <= 10 {
                return program;
            }
        }
    }

    let start = Instant::now();
    let mut rng = fuzzgen::rng(0xACC3);
    for round in 0..200 {
        let reference = small_program(&mut rng);
        let candidate =
            if round % 4 == 0 { reference.clone() } else { small_program(&mut rng) };
        assert_eq!(
            flowforge_core::metrics::ast_match(&candidate, &reference),
            oracle_ast_match(&candidate, &reference),
            "ast_match disagrees with the oracle on round {round}"
        );
        assert_eq!(
            flowforge_core::metrics::dataflow_match(&candidate, &reference),
            oracle_dataflow_match(&candidate, &reference),
            "dataflow_match disagrees with the oracle on round {round}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(30), "oracle comparison took {elapsed:?}");
    println!("ACCEPTANCE 3 oracle_equivalence: PASS");
}

#[test]
fn acceptance_4_agreement_threshold() {
    let a = vec![true; 330];
    let mut b = vec![true; 268];
    b.extend(vec![false; 62]);
    let rate = agreement_rate(&a, &b).unwrap();
    assert_eq!(rate, 268.0 / 330.0);
    assert_eq!((rate * 1000.0).round() / 1000.0, 0.812);
    println!("ACCEPTANCE 4 agreement_threshold: PASS");
}

#[test]
fn acceptance_5_validator_rule_coverage() {
    fn wrap(code: &str) -> String {
        format!("Code:\n```python\n{code}```\n")
    }
    fn distinct_rules(response: &str, docs: &[ApiDoc]) -> BTreeSet<Rule> {
        let report = validate(response, docs, &BuiltinAllowlist::default());
        assert!(!report.passed, "fixture unexpectedly passed: {response:?}");
        report.violations.iter().map(|v| v.rule).collect()
    }
    fn doc(registry: &ApiRegistry, id: &str) -> ApiDoc {
        registry.get(id).expect("fixture id present").clone()
    }

    let registry_text = std::fs::read_to_string(fixture("registry_case.json")).unwrap();
    let registry = load_registry(&registry_text).unwrap();
    let count = doc(&registry, "is.workflow.actions.count");

    let no_code = distinct_rules("I cannot write this workflow.", std::slice::from_ref(&count));
    assert_eq!(no_code, BTreeSet::from([Rule::NoCode]));

    let hallucinated = distinct_rules(
        &wrap("x = is_workflow_actions_count(WFCountType='Items')\ntime.sleep(1)\n"),
        std::slice::from_ref(&count),
    );
    assert_eq!(hallucinated, BTreeSet::from([Rule::HallucinatedApi]));
    let report = validate(
        &wrap("x = is_workflow_actions_count(WFCountType='Items')\ntime.sleep(1)\n"),
        std::slice::from_ref(&count),
        &BuiltinAllowlist::default(),
    );
    assert!(report.violations.iter().any(|v| v.detail.contains("time_sleep")));

    let param = distinct_rules(
        &wrap("is_workflow_actions_count(WFCountType=5)\n"),
        std::slice::from_ref(&count),
    );
    assert_eq!(param, BTreeSet::from([Rule::ParamViolation]));

    // The full case-study listing validates cleanly against its registry.
    let sample = seed_sample();
    let docs: Vec<ApiDoc> = sample.api_docs.iter().map(|id| doc(&registry, id)).collect();
    let report = validate(&wrap(&sample.code), &docs, &BuiltinAllowlist::default());
    assert!(report.passed, "case-study violations: {:?}", report.violations);
    println!("ACCEPTANCE 5 validator_rule_coverage: PASS");
}

#[test]
fn acceptance_6_roundtrip_structure() {
    let start = Instant::now();
    let mut rng = fuzzgen::rng(0xACC6);
    for case in 0..1000 {
        let shortcut = fuzzgen::random_shortcut(&mut rng, 6, 200);
        let ast = build_ast(&shortcut)
            .unwrap_or_else(|e| panic!("case {case}: build failed: {e}"));
        let plan = assign_names(&ast, None);
        let code =
            emit_code(&ast, &plan).unwrap_or_else(|e| panic!("case {case}: emit failed: {e}"));
        let program = wfdsl::parse(&code)
            .unwrap_or_else(|e| panic!("case {case}: emitted code does not parse: {e}\n{code}"));
        assert_eq!(
            ast.kind_skeleton(),
            to_ast(&program).kind_skeleton(),
            "case {case}: structure not preserved\n{code}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed < Duration::from_secs(60), "1000 roundtrips took {elapsed:?}");
    println!("ACCEPTANCE 6 roundtrip_structure: PASS");
}

#[test]
fn acceptance_7_sampling_contract() {
    let registry_text = std::fs::read_to_string(fixture("registry_sampling.json")).unwrap();
    let registry = load_registry(&registry_text).unwrap();
    for seed in 0..1000u64 {
        let n = 2 + (seed as usize % 11);
        let cfg = SamplingConfig::new(n, seed, "is.workflow.actions");
        let drawn = sample_apis(&registry, &cfg).unwrap();
        assert_eq!(drawn.builtin.len(), n / 2, "seed {seed} n {n}: builtin share broken");
        assert!(
            (1..=5).contains(&drawn.apps.len()),
            "seed {seed}: {} apps outside 1..=5",
            drawn.apps.len()
        );
        assert_eq!(drawn, sample_apis(&registry, &cfg).unwrap(), "seed {seed} not reproducible");
    }
    println!("ACCEPTANCE 7 sampling_contract: PASS");
}

#[test]
fn acceptance_8_stats_spreadsheet() {
    fn sample(id: &str, category: &str, code: &str, api_docs: &[&str]) -> WorkflowSample {
        let mut s = WorkflowSample::new(id);
        s.category = category.to_string();
        s.code = code.to_string();
        s.api_docs = api_docs.iter().map(|a| a.to_string()).collect();
        s
    }

    let corpus = [
        seed_sample(),
        sample(
            "s2",
            "Productivity",
            "a = f()\nfor i in range(2):\n    b = g()\n    c = h()\n",
            &["is.workflow.actions.count", "is.workflow.actions.url"],
        ),
        sample("s3", "Utilities", "if c:\n    f()\nelse:\n    g()\n", &["is.workflow.actions.showwebpage"]),
        sample(
            "s4",
            "Health & Fitness",
            "while cond:\n    if d:\n        h()\n",
            &["is.workflow.actions.getvariable", "is.workflow.actions.detect.link"],
        ),
        sample("s5", "Utilities", "pass\n", &[]),
    ];

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    std::fs::write(&path, corpus_to_string(&corpus)).unwrap();
    let registry = fixture("registry_case.json");
    let output = run_bin(&[
        "stats",
        "--corpus",
        path.to_str().unwrap(),
        "--registry",
        registry.to_str().unwrap(),
    ]);
    let stats: CorpusStats =
        serde_json::from_str(String::from_utf8(output.stdout).unwrap().trim()).unwrap();

    // Spreadsheet over the five rows: per-sample (action, if, loop, depth)
    // are (9,2,0,1), (3,0,1,1), (2,1,0,1), (1,1,1,2), (0,0,0,0).
    assert_eq!(stats.n_instances, 5);
    assert_eq!(stats.n_apps, 1);
    assert_eq!(stats.n_apis, 8);
    assert_eq!(stats.n_categories, 4);
    assert_eq!(stats.avg_action, 3.0);
    assert_eq!(stats.avg_if, 0.8);
    assert_eq!(stats.avg_loop, 0.4);
    assert_eq!(stats.avg_nested_depth, 1.0);
    assert_eq!(stats.n_unparseable, 0);
    println!("ACCEPTANCE 8 stats_spreadsheet: PASS");
}

#[test]
fn acceptance_9_pipeline_reproducible() {
    struct RunResult {
        files: Vec<(String, Vec<u8>)>,
        passrate_stdout: String,
    }

    fn run_pipeline(dir: &Path) -> RunResult {
        let mock = fixture("mock_pipeline.json");
        let mock = mock.to_str().unwrap();
        let p = |name: &str| dir.join(name).to_str().unwrap().to_string();

        run_bin(&[
            "transcribe",
            "--input",
            fixture("golden_workflow.plist").to_str().unwrap(),
            "--id",
            "golden",
            "--out",
            &p("sample0.json"),
        ]);
        run_bin(&[
            "thoughts",
            "--sample",
            &p("sample0.json"),
            "--mock",
            mock,
            "--out",
            &p("sample1.json"),
        ]);
        std::fs::copy(dir.join("sample1.json"), dir.join("corpus.jsonl")).unwrap();
        run_bin(&[
            "expand",
            "--registry",
            fixture("registry_sampling.json").to_str().unwrap(),
            "--corpus",
            &p("corpus.jsonl"),
            "--category",
            "Productivity",
            "--seed",
            "7",
            "--mock",
            mock,
            "--out",
            &p("expanded.json"),
        ]);
        run_bin(&[
            "refine",
            "--sample",
            &p("sample1.json"),
            "--registry",
            fixture("registry_case.json").to_str().unwrap(),
            "--mock",
            mock,
            "--out",
            &p("sample2.json"),
        ]);
        std::fs::copy(dir.join("sample2.json"), dir.join("corpus2.jsonl")).unwrap();
        let output = run_bin(&[
            "passrate",
            "--corpus",
            &p("corpus2.jsonl"),
            "--registry",
            fixture("registry_case.json").to_str().unwrap(),
            "--mock",
            mock,
            "--out",
            &p("verdicts.jsonl"),
        ]);

        let names = ["sample0.json", "sample1.json", "expanded.json", "sample2.json", "verdicts.jsonl"];
        RunResult {
            files: names
                .iter()
                .map(|n| (n.to_string(), std::fs::read(dir.join(n)).unwrap()))
                .collect(),
            passrate_stdout: String::from_utf8(output.stdout).unwrap(),
        }
    }

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let a = run_pipeline(dir_a.path());
    let b = run_pipeline(dir_b.path());

    for ((name, bytes_a), (_, bytes_b)) in a.files.iter().zip(&b.files) {
        assert_eq!(bytes_a, bytes_b, "{name} differs between runs");
    }
    assert_eq!(a.passrate_stdout, b.passrate_stdout);

    // The chain produced real content, not matching empties.
    let filled: WorkflowSample =
        serde_json::from_slice(&a.files[1].1).unwrap();
    assert!(!filled.query.is_empty() && !filled.plan.is_empty());
    assert!(filled.code.contains("# "), "comments were not interleaved");
    let refined: WorkflowSample = serde_json::from_slice(&a.files[3].1).unwrap();
    assert_ne!(refined.code, filled.code, "refinement did not apply");
    let summary: serde_json::Value = serde_json::from_str(a.passrate_stdout.trim()).unwrap();
    assert_eq!(summary["pass_rate"], 1.0);
    println!("ACCEPTANCE 9 pipeline_reproducible: PASS");
}

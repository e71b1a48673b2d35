//! Rule-based quality confirmation for model responses: the response must
//! carry code, the code must parse, every call must be a provided API or an
//! allowed builtin, and literal arguments must respect the declared
//! parameter constraints.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::registry::ApiDoc;
use crate::wfdsl::{self, collect_call_exprs, DslErrorKind, DslExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    NoCode,
    UnsupportedConstruct,
    HallucinatedApi,
    ParamViolation,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Violation {
    pub rule: Rule,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    fn from_violations(mut violations: Vec<Violation>) -> Self {
        violations.sort_by(|a, b| {
            let ka = (a.line.unwrap_or(usize::MAX), a.rule, &a.detail);
            let kb = (b.line.unwrap_or(usize::MAX), b.rule, &b.detail);
            ka.cmp(&kb)
        });
        ValidationReport { passed: violations.is_empty(), violations }
    }
}

/// Function names permitted without registry documentation. The base set is
/// always present; the list only grows.
#[derive(Debug, Clone, PartialEq)]
pub struct BuiltinAllowlist {
    names: BTreeSet<String>,
}

const BASE_ALLOWLIST: &[&str] = &["input", "print", "range", "str", "len"];

impl Default for BuiltinAllowlist {
    fn default() -> Self {
        BuiltinAllowlist { names: BASE_ALLOWLIST.iter().map(|s| s.to_string()).collect() }
    }
}

impl BuiltinAllowlist {
    pub fn with<I: IntoIterator<Item = S>, S: Into<String>>(extra: I) -> Self {
        let mut allow = BuiltinAllowlist::default();
        allow.names.extend(extra.into_iter().map(Into::into));
        allow
    }

    pub fn contains(&self, name: &str) -> bool {
        self.names.contains(name)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Demand that every provided API is used, not just at least one.
    pub require_all_apis: bool,
}

/// First fenced code block tagged `python` after a "Code:" marker; without
/// one, the first fenced block of any tag. An unclosed fence runs to the end
/// of the response.
pub fn extract_code_block(response: &str) -> Option<String> {
    let blocks = fenced_blocks(response);
    if let Some(marker) = response.find("Code:") {
        if let Some(block) = blocks.iter().find(|b| b.tag == "python" && b.start >= marker) {
            return Some(block.content.clone());
        }
    }
    blocks.into_iter().next().map(|b| b.content)
}

struct Fenced {
    tag: String,
    content: String,
    /// Byte offset of the opening fence.
    start: usize,
}

fn fenced_blocks(response: &str) -> Vec<Fenced> {
    let mut blocks = Vec::new();
    let mut open: Option<(String, usize, Vec<&str>)> = None;
    let mut offset = 0;
    for line in response.split_inclusive('\n') {
        let stripped = line.trim_end_matches(['\n', '\r']);
        let fence = stripped.trim_start().strip_prefix("```");
        match (&mut open, fence) {
            (None, Some(tag)) => {
                open = Some((tag.trim().to_ascii_lowercase(), offset, Vec::new()));
            }
            (Some((tag, start, lines)), Some(_)) => {
                blocks.push(Fenced {
                    tag: std::mem::take(tag),
                    content: lines.join("\n"),
                    start: *start,
                });
                open = None;
            }
            (Some((_, _, lines)), None) => lines.push(stripped),
            (None, None) => {}
        }
        offset += line.len();
    }
    if let Some((tag, start, lines)) = open {
        blocks.push(Fenced { tag, content: lines.join("\n"), start });
    }
    blocks
}

pub fn validate(
    response: &str,
    provided_apis: &[ApiDoc],
    allow: &BuiltinAllowlist,
) -> ValidationReport {
    validate_with(response, provided_apis, allow, ValidateOptions::default())
}

pub fn validate_with(
    response: &str,
    provided_apis: &[ApiDoc],
    allow: &BuiltinAllowlist,
    opts: ValidateOptions,
) -> ValidationReport {
    let Some(code) = extract_code_block(response) else {
        return ValidationReport::from_violations(vec![Violation {
            rule: Rule::NoCode,
            detail: "response contains no code block".to_string(),
            line: None,
        }]);
    };
    let program = match wfdsl::parse(&code) {
        Ok(p) => p,
        Err(e) => {
            let rule = if e.kind == DslErrorKind::UnsupportedConstruct {
                Rule::UnsupportedConstruct
            } else {
                Rule::NoCode
            };
            return ValidationReport::from_violations(vec![Violation {
                rule,
                detail: format!("code does not parse: {}", e.message),
                line: Some(e.line),
            }]);
        }
    };

    let by_function: BTreeMap<String, &ApiDoc> =
        provided_apis.iter().map(|d| (d.function_name(), d)).collect();
    let mut used: BTreeSet<&str> = BTreeSet::new();
    let mut violations = Vec::new();

    for expr in collect_call_exprs(&program) {
        let DslExpr::Call { name, line, kwargs, .. } = expr else { continue };
        let function = name.replace('.', "_");
        let Some(doc) = by_function.get(&function) else {
            if !allow.contains(&function) {
                violations.push(Violation {
                    rule: Rule::HallucinatedApi,
                    detail: function,
                    line: Some(*line),
                });
            }
            continue;
        };
        used.insert(doc.id.as_str());
        check_params(doc, kwargs, *line, &mut violations);
    }

    if used.is_empty() {
        violations.push(Violation {
            rule: Rule::HallucinatedApi,
            detail: "no provided API used".to_string(),
            line: None,
        });
    } else if opts.require_all_apis {
        for doc in provided_apis {
            if !used.contains(doc.id.as_str()) {
                violations.push(Violation {
                    rule: Rule::HallucinatedApi,
                    detail: format!("provided API not used: {}", doc.function_name()),
                    line: None,
                });
            }
        }
    }
    ValidationReport::from_violations(violations)
}

fn check_params(
    doc: &ApiDoc,
    kwargs: &[(String, DslExpr)],
    line: usize,
    violations: &mut Vec<Violation>,
) {
    let function = doc.function_name();
    for (key, value) in kwargs {
        let Some(param) = doc.params.iter().find(|p| &p.name == key) else {
            violations.push(Violation {
                rule: Rule::ParamViolation,
                detail: format!("{function}: unknown parameter {key}"),
                line: Some(line),
            });
            continue;
        };
        let (Some(declared), Some(literal)) =
            (declared_family(&param.param_type), literal_family(value))
        else {
            continue;
        };
        if !declared.accepts(literal) {
            violations.push(Violation {
                rule: Rule::ParamViolation,
                detail: format!(
                    "{function}: parameter {key} expects {} but got a {} literal",
                    declared.name(),
                    literal.name()
                ),
                line: Some(line),
            });
        }
    }
    for param in &doc.params {
        if param.required && !kwargs.iter().any(|(k, _)| k == &param.name) {
            violations.push(Violation {
                rule: Rule::ParamViolation,
                detail: format!("{function}: missing required parameter {}", param.name),
                line: Some(line),
            });
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Text,
    Integer,
    Numeric,
    Bool,
}

impl Family {
    fn name(self) -> &'static str {
        match self {
            Family::Text => "text",
            Family::Integer => "an integer",
            Family::Numeric => "a number",
            Family::Bool => "a boolean",
        }
    }

    fn accepts(self, literal: Family) -> bool {
        self == literal || (self == Family::Numeric && literal == Family::Integer)
    }
}

fn declared_family(t: &str) -> Option<Family> {
    match t.to_ascii_lowercase().as_str() {
        "string" | "text" | "str" => Some(Family::Text),
        "integer" | "int" => Some(Family::Integer),
        "number" | "float" | "real" => Some(Family::Numeric),
        "boolean" | "bool" => Some(Family::Bool),
        _ => None,
    }
}

/// Only unambiguous literals take part in type checks; variables,
/// attachments, and composite or formatted values never do.
fn literal_family(expr: &DslExpr) -> Option<Family> {
    match expr {
        DslExpr::StringLit(_) => Some(Family::Text),
        DslExpr::Number(raw) => {
            if raw.parse::<i64>().is_ok() {
                Some(Family::Integer)
            } else {
                Some(Family::Numeric)
            }
        }
        DslExpr::Bool(_) => Some(Family::Bool),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::registry::ApiParam;

    fn doc(id: &str, params: &[(&str, &str, bool)]) -> ApiDoc {
        ApiDoc {
            id: id.to_string(),
            app_id: "is.workflow.actions".to_string(),
            name: id.rsplit('.').next().unwrap().to_string(),
            description: String::new(),
            params: params
                .iter()
                .map(|(name, ty, required)| ApiParam {
                    name: name.to_string(),
                    param_type: ty.to_string(),
                    default: None,
                    required: *required,
                })
                .collect(),
            return_type: None,
            return_name: None,
        }
    }

    fn reference_registry() -> Vec<ApiDoc> {
        vec![
            doc("is.workflow.actions.showwebpage", &[("WFInput", "string", false)]),
            doc("is.workflow.actions.getitemfromlist", &[("WFInput", "string", false)]),
            doc("is.workflow.actions.getvariable", &[("WFVariable", "string", false)]),
            doc("is.workflow.actions.url", &[("WFURLActionURL", "string", false)]),
            doc("is.workflow.actions.getmyworkflows", &[]),
            doc("is.workflow.actions.count", &[("WFCountType", "string", false)]),
            doc(
                "is.workflow.actions.runworkflow",
                &[
                    ("WFWorkflowName", "string", false),
                    ("WFShowWorkflow", "boolean", false),
                    ("WFInput", "dictionary", false),
                ],
            ),
            doc("is.workflow.actions.detect.link", &[("WFInput", "string", false)]),
        ]
    }

    fn wrap(code: &str) -> String {
        format!("Thought: plan.\nCode:\n```python\n{code}```\n")
    }

    #[test]
    fn extracts_python_block_after_code_marker() {
        let response = "Thought: plan.\nCode:\n```python\nx = f()\n```";
        assert_eq!(extract_code_block(response), Some("x = f()".to_string()));
    }

    #[test]
    fn prose_only_yields_none() {
        assert_eq!(extract_code_block("no code here"), None);
    }

    #[test]
    fn first_block_wins_without_marker() {
        let response = "```\nfirst\n```\ntext\n```python\nsecond\n```";
        assert_eq!(extract_code_block(response), Some("first".to_string()));
    }

    #[test]
    fn marker_skips_earlier_non_python_blocks() {
        let response = "```json\n{}\n```\nCode:\n```python\nx = f()\n```";
        assert_eq!(extract_code_block(response), Some("x = f()".to_string()));
    }

    #[test]
    fn unclosed_fence_runs_to_end() {
        let response = "Code:\n```python\nx = f()\ny = g()";
        assert_eq!(extract_code_block(response), Some("x = f()\ny = g()".to_string()));
    }

    #[test]
    fn reference_workflow_code_passes() {
        let code = "\
workflow_action_count = is_workflow_actions_count(WFCountType='Items')
if workflow_action_count == '0':
    workflow_action_url = is_workflow_actions_url(WFURLActionURL='https://www.amazon.com/gp/history')
    is_workflow_actions_showwebpage(WFInput=workflow_action_url)
else:
    user_input_value = is_workflow_actions_getvariable(WFVariable=f'{input(\"Please enter the value:\")}')
    detected_link = is_workflow_actions_detect_link(WFInput=user_input_value)
    item_from_list = is_workflow_actions_getitemfromlist(WFInput=detected_link)
    is_workflow_actions_showwebpage(WFInput=item_from_list)
my_workflows = is_workflow_actions_getmyworkflows()
if 'UpdateKit' in my_workflows:
    is_workflow_actions_runworkflow(WFWorkflowName='UpdateKit', WFShowWorkflow=False)
";
        let report =
            validate(&wrap(code), &reference_registry(), &BuiltinAllowlist::default());
        assert!(report.passed, "{:?}", report.violations);
    }

    #[test]
    fn missing_code_block_is_no_code() {
        let report = validate("all prose", &reference_registry(), &BuiltinAllowlist::default());
        assert!(!report.passed);
        assert_eq!(report.violations[0].rule, Rule::NoCode);
    }

    #[test]
    fn unparsable_code_reports_line() {
        let report = validate(
            &wrap("x = f()\nif y:\nbad\n"),
            &reference_registry(),
            &BuiltinAllowlist::default(),
        );
        assert_eq!(report.violations[0].rule, Rule::NoCode);
        assert_eq!(report.violations[0].line, Some(3));
    }

    #[test]
    fn imports_are_unsupported_not_nocode() {
        let report = validate(
            &wrap("import time\n"),
            &reference_registry(),
            &BuiltinAllowlist::default(),
        );
        assert_eq!(report.violations[0].rule, Rule::UnsupportedConstruct);
    }

    #[test]
    fn time_sleep_is_hallucinated() {
        let code = "x = is_workflow_actions_count(WFCountType='Items')\ntime.sleep(1)\n";
        let report = validate(&wrap(code), &reference_registry(), &BuiltinAllowlist::default());
        assert!(!report.passed);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].rule, Rule::HallucinatedApi);
        assert_eq!(report.violations[0].detail, "time_sleep");
        assert_eq!(report.violations[0].line, Some(2));
    }

    #[test]
    fn zero_provided_usage_is_flagged() {
        let report = validate(
            &wrap("x = input('value')\nprint(x)\n"),
            &reference_registry(),
            &BuiltinAllowlist::default(),
        );
        assert!(!report.passed);
        assert!(report.violations.iter().any(|v| v.detail == "no provided API used"));
    }

    #[test]
    fn unknown_keyword_is_a_param_violation() {
        let code = "x = is_workflow_actions_count(WFBogus=1)\n";
        let report = validate(&wrap(code), &reference_registry(), &BuiltinAllowlist::default());
        assert!(!report.passed);
        assert_eq!(report.violations[0].rule, Rule::ParamViolation);
        assert!(report.violations[0].detail.contains("WFBogus"));
    }

    #[test]
    fn missing_required_param_is_flagged() {
        let apis = vec![doc("a.b.send", &[("WFTarget", "string", true)])];
        let report =
            validate(&wrap("a_b_send()\n"), &apis, &BuiltinAllowlist::default());
        assert!(!report.passed);
        assert!(report.violations[0].detail.contains("missing required parameter WFTarget"));
    }

    #[test]
    fn literal_type_contradictions_are_flagged_variables_are_not() {
        let apis = vec![doc(
            "a.b.set",
            &[("WFCount", "integer", false), ("WFLabel", "string", false), ("WFOn", "boolean", false)],
        )];
        let allow = BuiltinAllowlist::default();

        let ok = validate(&wrap("a_b_set(WFCount=3, WFLabel='x', WFOn=True)\n"), &apis, &allow);
        assert!(ok.passed, "{:?}", ok.violations);

        let variables = validate(&wrap("a_b_set(WFCount=y, WFLabel=f'{input()}')\n"), &apis, &allow);
        assert!(variables.passed, "{:?}", variables.violations);

        let bad = validate(&wrap("a_b_set(WFCount='three', WFLabel=4, WFOn='yes')\n"), &apis, &allow);
        assert_eq!(bad.violations.len(), 3);
        assert!(bad.violations.iter().all(|v| v.rule == Rule::ParamViolation));

        let real_for_int = validate(&wrap("a_b_set(WFCount=1.5)\n"), &apis, &allow);
        assert!(!real_for_int.passed);
    }

    #[test]
    fn require_all_apis_mode() {
        let apis = reference_registry();
        let code = wrap("x = is_workflow_actions_count(WFCountType='Items')\n");
        let lax = validate(&code, &apis, &BuiltinAllowlist::default());
        assert!(lax.passed);
        let strict = validate_with(
            &code,
            &apis,
            &BuiltinAllowlist::default(),
            ValidateOptions { require_all_apis: true },
        );
        assert!(!strict.passed);
        assert_eq!(strict.violations.len(), apis.len() - 1);
    }

    #[test]
    fn passed_implies_every_call_is_known() {
        let apis = reference_registry();
        let allow = BuiltinAllowlist::with(["custom_helper"]);
        let code = wrap(
            "x = is_workflow_actions_count(WFCountType='Items')\ncustom_helper(a=x)\nprint(x)\n",
        );
        let report = validate(&code, &apis, &allow);
        assert!(report.passed);
    }

    #[test]
    fn enlarging_provided_apis_never_adds_violations() {
        let mut rng = crate::fuzzgen::rng(0xA11);
        let pool: Vec<ApiDoc> = (0..12)
            .map(|i| doc(&format!("a.b.fn{i}"), &[("WFInput", "string", false)]))
            .collect();
        for _ in 0..60 {
            use rand::Rng;
            let lines: Vec<String> = (0..rng.random_range(1..6))
                .map(|_| {
                    let f = rng.random_range(0..pool.len());
                    format!("a_b_fn{f}(WFInput='x')")
                })
                .collect();
            let response = wrap(&(lines.join("\n") + "\n"));
            let k = rng.random_range(0..pool.len());
            let small: Vec<ApiDoc> = pool[..k].to_vec();
            let big: Vec<ApiDoc> = pool.to_vec();
            let v_small = validate(&response, &small, &BuiltinAllowlist::default()).violations;
            let v_big = validate(&response, &big, &BuiltinAllowlist::default()).violations;
            for v in &v_big {
                assert!(v_small.contains(v), "violation appeared when apis grew: {v:?}");
            }
        }
    }

    #[test]
    fn report_serializes_for_logs() {
        let report = validate("prose", &[], &BuiltinAllowlist::default());
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"NoCode\""));
        assert!(json.contains("\"passed\":false"));
        let back: ValidationReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }

    #[test]
    fn violations_sort_by_line_then_rule() {
        let apis = vec![doc("a.b.one", &[("P", "string", false)])];
        let code = wrap("zzz_missing()\na_b_one(Q=1)\n");
        let report = validate(&code, &apis, &BuiltinAllowlist::default());
        let lines: Vec<Option<usize>> = report.violations.iter().map(|v| v.line).collect();
        let mut sorted = lines.clone();
        sorted.sort_by_key(|l| l.unwrap_or(usize::MAX));
        assert_eq!(lines, sorted);
    }
}

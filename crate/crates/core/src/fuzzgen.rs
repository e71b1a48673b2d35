//! Seeded random inputs for property tests: well-nested action sequences and
//! rename maps. Everything is driven by an explicit rng so failures replay
//! from a seed.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ingest::{Attachment, ParamValue, RawAction, RawShortcut};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const TEXT_POOL: &[&str] = &[
    "Items",
    "0",
    "UpdateKit",
    "https://example.com/a",
    "Pick one",
    "hello world",
    "it's quoted",
    "two\nlines\there",
];

const CALL_IDS: &[&str] = &[
    "is.workflow.actions.url",
    "is.workflow.actions.count",
    "is.workflow.actions.getvariable",
    "is.workflow.actions.showwebpage",
    "is.workflow.actions.detect.link",
    "is.workflow.actions.getmyworkflows",
    "com.vendor.app.fetch",
];

const PARAM_KEYS: &[&str] = &["WFInput", "WFText", "WFURLActionURL", "WFCountType", "WFItems"];

const CONDITIONS: &[&str] = &["Equals", "Contains", "Is Greater Than", "Has Any Value"];

/// Names deliberately messy (spaces, reserved words, duplicates) to exercise
/// sanitization and dedup. None of them collide with generated loop counters.
const RENAME_POOL: &[&str] = &[
    "count",
    "my workflows",
    "result value",
    "workflow output",
    "x",
    "for",
    "value9",
    "total count",
];

/// Random action sequence whose control markers are well nested, at most
/// `max_depth` blocks deep and at most `max_len` actions long. Menus only
/// ever hold case content, as the real editor guarantees.
pub fn random_shortcut(rng: &mut ChaCha8Rng, max_depth: usize, max_len: usize) -> RawShortcut {
    let budget = rng.random_range(1..=max_len.max(1));
    let mut g = Gen {
        rng,
        actions: Vec::new(),
        budget,
        next_id: 0,
        produced: Vec::new(),
    };
    g.sequence(0, max_depth);
    RawShortcut { actions: g.actions, ..RawShortcut::default() }
}

/// Map every given uuid to a name drawn from a small messy pool.
pub fn random_rename_map(rng: &mut ChaCha8Rng, uuids: &[String]) -> BTreeMap<String, String> {
    uuids
        .iter()
        .map(|u| {
            let name = RENAME_POOL[rng.random_range(0..RENAME_POOL.len())];
            (u.clone(), name.to_string())
        })
        .collect()
}

struct Gen<'a> {
    rng: &'a mut ChaCha8Rng,
    actions: Vec<RawAction>,
    /// Remaining actions, control markers included.
    budget: usize,
    next_id: usize,
    /// Output uuids emitted so far; attachment targets come from here.
    produced: Vec<String>,
}

impl Gen<'_> {
    fn fresh(&mut self, prefix: &str) -> String {
        self.next_id += 1;
        format!("{prefix}-{:04}", self.next_id)
    }

    fn pick<'p>(&mut self, pool: &[&'p str]) -> &'p str {
        pool[self.rng.random_range(0..pool.len())]
    }

    fn sequence(&mut self, depth: usize, max_depth: usize) {
        let items = self.rng.random_range(0..=5);
        for _ in 0..items {
            // Blocks reserve their close marker up front so nesting always
            // balances even when the budget runs dry mid-body.
            let can_block = depth < max_depth && self.budget >= 6;
            let choice = if can_block { self.rng.random_range(0..10) } else { 0 };
            match choice {
                0..=4 => {
                    if self.budget == 0 {
                        return;
                    }
                    self.call();
                }
                5 | 6 => self.conditional(depth, max_depth),
                7 => self.repeat(depth, max_depth),
                _ => self.menu(depth, max_depth),
            }
        }
    }

    fn call(&mut self) {
        self.budget -= 1;
        let mut action = RawAction::new(self.pick(CALL_IDS));
        let uuid = self.fresh("UUID");
        action.uuid = Some(uuid.clone());
        for _ in 0..self.rng.random_range(0..=2) {
            let key = self.pick(PARAM_KEYS).to_string();
            let value = self.value(0);
            action.params.insert(key, value);
        }
        self.actions.push(action);
        self.produced.push(uuid);
    }

    fn value(&mut self, depth: usize) -> ParamValue {
        let roll = self.rng.random_range(0..12);
        match roll {
            0..=3 => ParamValue::Text(self.pick(TEXT_POOL).to_string()),
            4 => ParamValue::Integer(self.rng.random_range(-5..100)),
            5 => ParamValue::Real(f64::from(self.rng.random_range(0..40)) / 4.0),
            6 => ParamValue::Bool(self.rng.random_bool(0.5)),
            7 if depth < 2 => {
                let n = self.rng.random_range(0..=2);
                ParamValue::List((0..n).map(|_| self.value(depth + 1)).collect())
            }
            8 if depth < 2 => {
                let n = self.rng.random_range(0..=2);
                let mut map = BTreeMap::new();
                for _ in 0..n {
                    let key = self.pick(TEXT_POOL).to_string();
                    map.insert(key, self.value(depth + 1));
                }
                ParamValue::Map(map)
            }
            9 => ParamValue::Attachment(Attachment::Ask {
                prompt: if self.rng.random_bool(0.7) {
                    Some(self.pick(TEXT_POOL).to_string())
                } else {
                    None
                },
            }),
            _ => match self.reference() {
                Some(a) => a,
                None => ParamValue::Text(self.pick(TEXT_POOL).to_string()),
            },
        }
    }

    fn reference(&mut self) -> Option<ParamValue> {
        if self.produced.is_empty() {
            return None;
        }
        let uuid = self.produced[self.rng.random_range(0..self.produced.len())].clone();
        Some(ParamValue::Attachment(Attachment::ActionOutput {
            output_uuid: uuid,
            output_name: None,
        }))
    }

    fn marker(&mut self, identifier: &str, mode: u8, grouping: &str) -> RawAction {
        let mut action = RawAction::new(identifier);
        action.control_flow_mode = Some(mode);
        action.grouping_id = Some(grouping.to_string());
        action.uuid = Some(self.fresh("UUID"));
        action
    }

    fn conditional(&mut self, depth: usize, max_depth: usize) {
        let grouping = self.fresh("GROUP");
        let has_else = self.rng.random_bool(0.5);
        self.budget -= 2 + usize::from(has_else);

        let mut open = self.marker("is.workflow.actions.conditional", 0, &grouping);
        if self.rng.random_bool(0.8) {
            let cond = self.pick(CONDITIONS).to_string();
            open.params.insert("WFCondition".into(), ParamValue::Text(cond));
            let operand = self.pick(TEXT_POOL).to_string();
            open.params.insert("WFConditionalActionString".into(), ParamValue::Text(operand));
        }
        if self.rng.random_bool(0.6) {
            if let Some(input) = self.reference() {
                open.params.insert("WFInput".into(), input);
            }
        }
        self.actions.push(open);
        self.sequence(depth + 1, max_depth);
        if has_else {
            let sep = self.marker("is.workflow.actions.conditional", 1, &grouping);
            self.actions.push(sep);
            self.sequence(depth + 1, max_depth);
        }
        let close = self.marker("is.workflow.actions.conditional", 2, &grouping);
        self.actions.push(close);
    }

    fn repeat(&mut self, depth: usize, max_depth: usize) {
        let grouping = self.fresh("GROUP");
        self.budget -= 2;
        let counted = self.rng.random_bool(0.5);
        let identifier = if counted {
            "is.workflow.actions.repeat.count"
        } else {
            "is.workflow.actions.repeat.each"
        };
        let mut open = self.marker(identifier, 0, &grouping);
        if counted {
            if self.rng.random_bool(0.8) {
                let count = ParamValue::Integer(self.rng.random_range(1..=5));
                open.params.insert("WFRepeatCount".into(), count);
            }
        } else if self.rng.random_bool(0.8) {
            let input = match self.reference() {
                Some(r) if self.rng.random_bool(0.6) => r,
                _ => ParamValue::Text(self.pick(TEXT_POOL).to_string()),
            };
            open.params.insert("WFInput".into(), input);
        }
        self.actions.push(open);
        self.sequence(depth + 1, max_depth);
        let close = self.marker(identifier, 2, &grouping);
        self.actions.push(close);
    }

    fn menu(&mut self, depth: usize, max_depth: usize) {
        let grouping = self.fresh("GROUP");
        let cases = self.rng.random_range(0..=3);
        self.budget -= 2 + cases;

        let mut open = self.marker("is.workflow.actions.choosefrommenu", 0, &grouping);
        if self.rng.random_bool(0.7) {
            let prompt = ParamValue::Text(self.pick(TEXT_POOL).to_string());
            open.params.insert("WFMenuPrompt".into(), prompt);
        }
        self.actions.push(open);
        for _ in 0..cases {
            let mut sep = self.marker("is.workflow.actions.choosefrommenu", 1, &grouping);
            if self.rng.random_bool(0.8) {
                let title = ParamValue::Text(self.pick(TEXT_POOL).to_string());
                sep.params.insert("WFMenuItemTitle".into(), title);
            }
            self.actions.push(sep);
            self.sequence(depth + 1, max_depth);
        }
        let close = self.marker("is.workflow.actions.choosefrommenu", 2, &grouping);
        self.actions.push(close);
    }
}

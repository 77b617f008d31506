use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::lexer::{tokenize, Tok, Token};
use super::literal::{parse_amplitude, parse_probability};
use super::{DslError, ParseError};
use crate::ensemble::{ExperimentSpec, PolicyKind};
use crate::error::Error;
use crate::guidance::{SupportMask, TransferMatrix};
use crate::state::{ConfigSpace, Filter, StepOperator, WaveFunction, C64};

type Pos = (usize, usize);

#[derive(Clone, Debug)]
struct Located<T> {
    pos: Pos,
    value: T,
}

#[derive(Clone, Debug)]
enum FilterDecl {
    Keep(Vec<Located<String>>),
    Costate(Vec<(C64, Located<String>)>),
}

/// `(input, [item])` groups of a step, mask or table body.
type Grouped<T> = Vec<(Located<String>, Vec<T>)>;
type Weighted<V> = (V, Located<String>);
type Groups<V> = Grouped<Weighted<V>>;

#[derive(Default)]
struct Decls {
    name: Option<Located<String>>,
    stages: BTreeMap<usize, Located<Vec<Located<String>>>>,
    steps: BTreeMap<usize, Located<Groups<C64>>>,
    filters: BTreeMap<usize, Located<FilterDecl>>,
    masks: BTreeMap<usize, Located<Grouped<Located<String>>>>,
    tables: BTreeMap<usize, Located<Groups<f64>>>,
    init: Option<Located<Vec<Weighted<C64>>>>,
    policy: Option<Located<PolicyKind>>,
}

struct Parser {
    toks: Vec<Token>,
    at: usize,
}

fn quoted(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| format!("'{s}'")).collect()
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.at]
    }

    fn pos(&self) -> Pos {
        let t = self.peek();
        (t.line, t.col)
    }

    fn bump(&mut self) -> Token {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn fail<T>(&self, expected: Vec<String>) -> Result<T, ParseError> {
        let t = self.peek();
        let message = match expected.as_slice() {
            [one] => format!("expected {one}, found {}", t.tok.describe()),
            many => format!("expected one of {}, found {}", many.join(", "), t.tok.describe()),
        };
        Err(ParseError::new(t.line, t.col, expected, message))
    }

    fn expect(&mut self, tok: Tok) -> Result<Pos, ParseError> {
        if self.peek().tok == tok {
            let t = self.bump();
            Ok((t.line, t.col))
        } else {
            self.fail(vec![tok.describe()])
        }
    }

    fn word(&mut self, what: &str) -> Result<Located<String>, ParseError> {
        match &self.peek().tok {
            Tok::Word(w) => {
                let value = w.clone();
                let t = self.bump();
                Ok(Located {
                    pos: (t.line, t.col),
                    value,
                })
            }
            _ => self.fail(vec![what.to_string()]),
        }
    }

    fn keyword(&mut self, kw: &str) -> Result<Pos, ParseError> {
        match &self.peek().tok {
            Tok::Word(w) if w == kw => {
                let t = self.bump();
                Ok((t.line, t.col))
            }
            _ => self.fail(quoted(&[kw])),
        }
    }

    fn index(&mut self) -> Result<Located<usize>, ParseError> {
        let pos = self.pos();
        match &self.peek().tok {
            Tok::Word(w) if !w.is_empty() && w.len() <= 6 && w.chars().all(|c| c.is_ascii_digit()) => {
                let value = w.parse().expect("digits");
                self.bump();
                Ok(Located { pos, value })
            }
            _ => self.fail(vec!["stage index".into()]),
        }
    }

    /// `T->T'`, returning `T` after checking `T' = T + 1`.
    fn transition(&mut self) -> Result<Located<usize>, ParseError> {
        let from = self.index()?;
        self.expect(Tok::Arrow)?;
        let to = self.index()?;
        if to.value != from.value + 1 {
            return Err(ParseError::new(
                to.pos.0,
                to.pos.1,
                vec![format!("'{}'", from.value + 1)],
                format!("steps go from stage {} to stage {}", from.value, from.value + 1),
            ));
        }
        Ok(from)
    }

    fn amplitude(&mut self) -> Result<C64, ParseError> {
        let w = self.word("amplitude")?;
        parse_amplitude(&w.value).ok_or_else(|| {
            ParseError::new(
                w.pos.0,
                w.pos.1,
                vec!["amplitude".into()],
                format!("malformed amplitude '{}'", w.value),
            )
        })
    }

    fn probability(&mut self) -> Result<f64, ParseError> {
        let w = self.word("probability")?;
        parse_probability(&w.value).ok_or_else(|| {
            ParseError::new(
                w.pos.0,
                w.pos.1,
                vec!["probability".into()],
                format!("malformed probability '{}'", w.value),
            )
        })
    }

    /// `{ item, item, ... }` with at least one item.
    fn braced_list<T>(&mut self, mut item: impl FnMut(&mut Self) -> Result<T, ParseError>) -> Result<Vec<T>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut out = vec![item(self)?];
        loop {
            match self.peek().tok {
                Tok::Comma => {
                    self.bump();
                    out.push(item(self)?);
                }
                Tok::RBrace => {
                    self.bump();
                    return Ok(out);
                }
                _ => return self.fail(quoted(&[",", "}"])),
            }
        }
    }

    /// `{ IN -> item, item; IN -> item; ... }`.
    fn grouped<T>(
        &mut self,
        mut item: impl FnMut(&mut Self) -> Result<T, ParseError>,
    ) -> Result<Grouped<T>, ParseError> {
        self.expect(Tok::LBrace)?;
        let mut groups = Vec::new();
        if self.peek().tok == Tok::RBrace {
            self.bump();
            return Ok(groups);
        }
        loop {
            let input = self.word("label")?;
            self.expect(Tok::Arrow)?;
            let mut items = vec![item(self)?];
            loop {
                match self.peek().tok {
                    Tok::Comma => {
                        self.bump();
                        items.push(item(self)?);
                    }
                    Tok::Semi => {
                        self.bump();
                        groups.push((input, items));
                        break;
                    }
                    Tok::RBrace => {
                        self.bump();
                        groups.push((input, items));
                        return Ok(groups);
                    }
                    _ => return self.fail(quoted(&[",", ";", "}"])),
                }
            }
        }
    }

    fn duplicate(pos: Pos, what: String) -> ParseError {
        ParseError::new(pos.0, pos.1, vec![], format!("duplicate {what}"))
    }

    fn statements(&mut self) -> Result<Decls, ParseError> {
        let mut d = Decls::default();
        let start = self.keyword("experiment")?;
        let name = self.word("experiment name")?;
        d.name = Some(Located {
            pos: start,
            value: name.value,
        });
        loop {
            let pos = self.pos();
            let kw = match &self.peek().tok {
                Tok::Eof => return Ok(d),
                Tok::Word(w) => w.clone(),
                _ => return self.fail(quoted(&["stage", "step", "filter", "mask", "table", "init", "policy"])),
            };
            match kw.as_str() {
                "stage" => {
                    self.bump();
                    let t = self.index()?;
                    self.keyword("basis")?;
                    let labels = self.braced_list(|p| p.word("label"))?;
                    if d.stages.insert(t.value, Located { pos, value: labels }).is_some() {
                        return Err(Self::duplicate(pos, format!("stage {}", t.value)));
                    }
                }
                "step" => {
                    self.bump();
                    let t = self.transition()?;
                    let groups = self.grouped(|p| {
                        let a = p.amplitude()?;
                        p.expect(Tok::Colon)?;
                        Ok((a, p.word("label")?))
                    })?;
                    if d.steps.insert(t.value, Located { pos, value: groups }).is_some() {
                        return Err(Self::duplicate(pos, format!("step {}->{}", t.value, t.value + 1)));
                    }
                }
                "filter" => {
                    self.bump();
                    let t = self.index()?;
                    if t.value == 0 {
                        return Err(ParseError::new(t.pos.0, t.pos.1, vec![], "stage 0 cannot be a filter stage"));
                    }
                    let kind = self.word("'keep' or 'costate'")?;
                    let decl = match kind.value.as_str() {
                        "keep" => FilterDecl::Keep(self.braced_list(|p| p.word("label"))?),
                        "costate" => FilterDecl::Costate(self.braced_list(|p| {
                            let a = p.amplitude()?;
                            p.expect(Tok::Colon)?;
                            Ok((a, p.word("label")?))
                        })?),
                        _ => {
                            return Err(ParseError::new(
                                kind.pos.0,
                                kind.pos.1,
                                quoted(&["keep", "costate"]),
                                format!("expected one of 'keep', 'costate', found '{}'", kind.value),
                            ))
                        }
                    };
                    if d.filters.insert(t.value - 1, Located { pos, value: decl }).is_some() {
                        return Err(Self::duplicate(pos, format!("filter {}", t.value)));
                    }
                }
                "mask" => {
                    self.bump();
                    let t = self.transition()?;
                    let groups = self.grouped(|p| p.word("label"))?;
                    if d.masks.insert(t.value, Located { pos, value: groups }).is_some() {
                        return Err(Self::duplicate(pos, format!("mask {}->{}", t.value, t.value + 1)));
                    }
                }
                "table" => {
                    self.bump();
                    let t = self.transition()?;
                    let groups = self.grouped(|p| {
                        let v = p.probability()?;
                        p.expect(Tok::Colon)?;
                        Ok((v, p.word("label")?))
                    })?;
                    if d.tables.insert(t.value, Located { pos, value: groups }).is_some() {
                        return Err(Self::duplicate(pos, format!("table {}->{}", t.value, t.value + 1)));
                    }
                }
                "init" => {
                    self.bump();
                    let amps = self.braced_list(|p| {
                        let a = p.amplitude()?;
                        p.expect(Tok::Colon)?;
                        Ok((a, p.word("label")?))
                    })?;
                    if d.init.replace(Located { pos, value: amps }).is_some() {
                        return Err(Self::duplicate(pos, "init".into()));
                    }
                }
                "policy" => {
                    self.bump();
                    let w = self.word("'flow' or 'table'")?;
                    let value = match w.value.as_str() {
                        "flow" => PolicyKind::Flow,
                        "table" => PolicyKind::Table,
                        _ => {
                            return Err(ParseError::new(
                                w.pos.0,
                                w.pos.1,
                                quoted(&["flow", "table"]),
                                format!("expected one of 'flow', 'table', found '{}'", w.value),
                            ))
                        }
                    };
                    if d.policy.replace(Located { pos, value }).is_some() {
                        return Err(Self::duplicate(pos, "policy".into()));
                    }
                }
                _ => return self.fail(quoted(&["stage", "step", "filter", "mask", "table", "init", "policy"])),
            }
        }
    }
}

fn invalid(pos: Pos, source: Error) -> DslError {
    DslError::Invalid {
        line: pos.0,
        col: pos.1,
        source,
    }
}

fn lookup(space: &ConfigSpace, label: &Located<String>) -> Result<usize, DslError> {
    space.require(&label.value).map_err(|e| invalid(label.pos, e))
}

/// Parses `.pwx` source into a validated experiment.
pub fn parse_experiment(text: &str) -> Result<ExperimentSpec, DslError> {
    let toks = tokenize(text)?;
    let mut p = Parser { toks, at: 0 };
    let d = p.statements()?;
    build(d)
}

fn build(d: Decls) -> Result<ExperimentSpec, DslError> {
    let name = d.name.expect("parser requires a name");
    let n_steps = d
        .stages
        .keys()
        .copied()
        .chain(d.filters.keys().map(|t| t + 1))
        .max()
        .unwrap_or(0);

    let mut spaces: Vec<ConfigSpace> = Vec::new();
    let mut steps: Vec<StepOperator> = Vec::new();
    let stage0 = d
        .stages
        .get(&0)
        .ok_or_else(|| invalid(name.pos, Error::InvalidExperiment("stage 0 is not declared".into())))?;
    spaces.push(make_space(0, stage0)?);

    for t in 0..n_steps {
        let from = spaces[t].clone();
        let step = match (d.stages.get(&(t + 1)), d.filters.get(&t)) {
            (Some(stage), None) => {
                let to = make_space(t + 1, stage)?;
                let decl = d.steps.get(&t).ok_or_else(|| {
                    invalid(
                        stage.pos,
                        Error::InvalidExperiment(format!("no step or filter leads from stage {t} to stage {}", t + 1)),
                    )
                })?;
                let mut m = DMatrix::zeros(to.dim(), from.dim());
                let mut seen = vec![false; from.dim()];
                for (input, outs) in &decl.value {
                    let j = lookup(&from, input)?;
                    if std::mem::replace(&mut seen[j], true) {
                        return Err(invalid(input.pos, Error::DuplicateLabel(input.value.clone())));
                    }
                    for (a, out) in outs {
                        let i = lookup(&to, out)?;
                        m[(i, j)] += a;
                    }
                }
                StepOperator::new(from, to, m).map_err(|e| invalid(decl.pos, e))?
            }
            (None, Some(filter)) => {
                if let Some(s) = d.steps.get(&t) {
                    return Err(invalid(
                        s.pos,
                        Error::InvalidExperiment(format!("stage {} is defined by a filter", t + 1)),
                    ));
                }
                let f = match &filter.value {
                    FilterDecl::Keep(labels) => {
                        for l in labels {
                            lookup(&from, l)?;
                        }
                        Filter::keep(labels.iter().map(|l| l.value.clone()))
                    }
                    FilterDecl::Costate(amps) => {
                        Filter::Costate(amps.iter().map(|(a, l)| (l.value.clone(), *a)).collect())
                    }
                };
                StepOperator::filter(from, f, t + 1).map_err(|e| invalid(filter.pos, e))?
            }
            (Some(stage), Some(_)) => {
                return Err(invalid(
                    stage.pos,
                    Error::InvalidExperiment(format!("stage {} is declared and also defined by a filter", t + 1)),
                ))
            }
            (None, None) => {
                return Err(invalid(
                    name.pos,
                    Error::InvalidExperiment(format!("stage {} is not declared", t + 1)),
                ))
            }
        };
        spaces.push(step.to_space().clone());
        steps.push(step);
    }
    for (t, s) in &d.steps {
        if *t >= n_steps || d.filters.contains_key(t) {
            return Err(invalid(
                s.pos,
                Error::InvalidExperiment(format!("step {t}->{} has no target stage", t + 1)),
            ));
        }
    }

    let init = d
        .init
        .as_ref()
        .ok_or_else(|| invalid(name.pos, Error::InvalidExperiment("missing init".into())))?;
    let mut amps = vec![C64::new(0.0, 0.0); spaces[0].dim()];
    for (a, l) in &init.value {
        let j = lookup(&spaces[0], l)?;
        amps[j] += a;
    }
    let initial = WaveFunction::from_vec(spaces[0].clone(), amps).map_err(|e| invalid(init.pos, e))?;
    let mut spec = ExperimentSpec::new(name.value.clone(), initial, steps).map_err(|e| invalid(name.pos, e))?;

    for (t, m) in &d.masks {
        let (from, to) = step_spaces(&spaces, *t, m.pos)?;
        let mut allowed = DMatrix::from_element(to.dim(), from.dim(), false);
        for (input, outs) in &m.value {
            let j = lookup(from, input)?;
            for o in outs {
                allowed[(lookup(to, o)?, j)] = true;
            }
        }
        let mask = SupportMask::new(from.clone(), to.clone(), allowed, "declared").map_err(|e| invalid(m.pos, e))?;
        spec = spec.with_mask(*t, mask).map_err(|e| invalid(m.pos, e))?;
    }
    for (t, tab) in &d.tables {
        let (from, to) = step_spaces(&spaces, *t, tab.pos)?;
        let mut entries = DMatrix::zeros(to.dim(), from.dim());
        let mut defined = vec![false; from.dim()];
        for (input, outs) in &tab.value {
            let j = lookup(from, input)?;
            if std::mem::replace(&mut defined[j], true) {
                return Err(invalid(input.pos, Error::DuplicateLabel(input.value.clone())));
            }
            for (p, o) in outs {
                entries[(lookup(to, o)?, j)] += p;
            }
        }
        let table =
            TransferMatrix::new(from.clone(), to.clone(), entries, defined).map_err(|e| invalid(tab.pos, e))?;
        spec = spec.with_table(*t, table).map_err(|e| invalid(tab.pos, e))?;
    }
    if let Some(p) = &d.policy {
        spec = spec.with_policy(p.value).map_err(|e| invalid(p.pos, e))?;
    }
    Ok(spec)
}

fn step_spaces(spaces: &[ConfigSpace], t: usize, pos: Pos) -> Result<(&ConfigSpace, &ConfigSpace), DslError> {
    match (spaces.get(t), spaces.get(t + 1)) {
        (Some(a), Some(b)) => Ok((a, b)),
        _ => Err(invalid(
            pos,
            Error::InvalidExperiment(format!("no step {t}->{}", t + 1)),
        )),
    }
}

fn make_space(stage: usize, decl: &Located<Vec<Located<String>>>) -> Result<ConfigSpace, DslError> {
    for (k, l) in decl.value.iter().enumerate() {
        if decl.value[..k].iter().any(|m| m.value == l.value) {
            return Err(invalid(l.pos, Error::DuplicateLabel(l.value.clone())));
        }
    }
    ConfigSpace::new(stage, decl.value.iter().map(|l| l.value.clone())).map_err(|e| invalid(decl.pos, e))
}

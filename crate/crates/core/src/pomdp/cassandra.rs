//! The text `.pomdp` format used by common POMDP solvers.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::PomdpModel;
use crate::error::{Error, Result};

/// Renders the model. Transitions are written as single entries, observation
/// distributions as rows and rewards with wildcard end state and observation.
pub fn to_cassandra_string(model: &PomdpModel) -> String {
    let mut s = String::new();
    s.push_str("discount: 1.0\n");
    s.push_str("values: reward\n");
    let _ = writeln!(s, "states: {}", model.states.join(" "));
    let _ = writeln!(s, "actions: {}", model.actions.join(" "));
    let _ = writeln!(s, "observations: {}", model.observations.join(" "));
    let start: Vec<String> = model.start.iter().map(f64::to_string).collect();
    let _ = writeln!(s, "start: {}", start.join(" "));
    s.push('\n');
    for (a, rows) in model.trans.iter().enumerate() {
        for (from, row) in rows.iter().enumerate() {
            for &(to, p) in row {
                let _ = writeln!(
                    s,
                    "T: {} : {} : {} {}",
                    model.actions[a], model.states[from], model.states[to], p
                );
            }
        }
    }
    s.push('\n');
    for (a, rows) in model.obs.iter().enumerate() {
        for (to, row) in rows.iter().enumerate() {
            let values: Vec<String> = row.iter().map(f64::to_string).collect();
            let _ = writeln!(s, "O: {} : {}\n{}", model.actions[a], model.states[to], values.join(" "));
        }
    }
    s.push('\n');
    for (a, rewards) in model.reward.iter().enumerate() {
        for (state, &r) in rewards.iter().enumerate() {
            if r != 0.0 {
                let _ = writeln!(s, "R: {} : {} : * : * {}", model.actions[a], model.states[state], r);
            }
        }
    }
    s
}

pub fn write_cassandra(model: &PomdpModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_cassandra_string(model))?;
    Ok(())
}

pub fn read_cassandra(path: impl AsRef<Path>) -> Result<PomdpModel> {
    parse_cassandra(&std::fs::read_to_string(path)?)
}

#[derive(Debug, Clone, PartialEq)]
struct Token {
    text: String,
    line: usize,
}

fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("");
        for word in line.replace(':', " : ").split_whitespace() {
            out.push(Token {
                text: word.to_string(),
                line: i + 1,
            });
        }
    }
    out
}

const SECTIONS: [&str; 9] = [
    "discount",
    "values",
    "states",
    "actions",
    "observations",
    "start",
    "T",
    "O",
    "R",
];

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

/// A `*`, a name or an index.
enum Target {
    All,
    One(usize),
}

impl Parser {
    fn err(&self, msg: impl Into<String>) -> Error {
        let line = self
            .tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map_or(0, |t| t.line);
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }

    fn peek(&self) -> Option<&str> {
        self.tokens.get(self.pos).map(|t| t.text.as_str())
    }

    fn at_section(&self) -> bool {
        matches!(self.peek(), Some(t) if SECTIONS.contains(&t))
            && self.tokens.get(self.pos + 1).map(|t| t.text.as_str()) == Some(":")
    }

    fn next(&mut self) -> Result<String> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| self.err("unexpected end of file"))?
            .text
            .clone();
        self.pos += 1;
        Ok(t)
    }

    fn expect(&mut self, what: &str) -> Result<()> {
        let t = self.next()?;
        if t != what {
            self.pos -= 1;
            return Err(self.err(format!("expected {what:?}, found {t:?}")));
        }
        Ok(())
    }

    fn number(&mut self) -> Result<f64> {
        let t = self.next()?;
        t.parse::<f64>().map_err(|_| {
            self.pos -= 1;
            self.err(format!("expected a number, found {t:?}"))
        })
    }

    fn numbers(&mut self, count: usize) -> Result<Vec<f64>> {
        (0..count).map(|_| self.number()).collect()
    }

    /// Names until the next section header; a single integer means that many
    /// unnamed entries.
    fn name_list(&mut self) -> Result<Vec<String>> {
        let mut names = Vec::new();
        while self.peek().is_some() && !self.at_section() {
            names.push(self.next()?);
        }
        if names.len() == 1 {
            if let Ok(count) = names[0].parse::<usize>() {
                return Ok((0..count).map(|i| i.to_string()).collect());
            }
        }
        if names.is_empty() {
            return Err(self.err("empty list"));
        }
        Ok(names)
    }

    fn target(&mut self, names: &[String]) -> Result<Target> {
        let t = self.next()?;
        if t == "*" {
            return Ok(Target::All);
        }
        if let Some(i) = names.iter().position(|n| *n == t) {
            return Ok(Target::One(i));
        }
        match t.parse::<usize>() {
            Ok(i) if i < names.len() => Ok(Target::One(i)),
            _ => {
                self.pos -= 1;
                Err(self.err(format!("unknown name {t:?}")))
            }
        }
    }
}

fn expand(target: &Target, len: usize) -> Vec<usize> {
    match target {
        Target::All => (0..len).collect(),
        Target::One(i) => vec![*i],
    }
}

/// Parses the subset of the format produced by [`to_cassandra_string`] plus
/// the common matrix, row and wildcard forms of `T:` and `O:`.
pub fn parse_cassandra(text: &str) -> Result<PomdpModel> {
    let mut p = Parser {
        tokens: tokenize(text),
        pos: 0,
    };
    let mut states = None;
    let mut actions = None;
    let mut observations = None;
    let mut start_tokens = None;
    // Preamble.
    while p.at_section() && !matches!(p.peek(), Some("T" | "O" | "R")) {
        let key = p.next()?;
        p.expect(":")?;
        match key.as_str() {
            "discount" => {
                let d = p.number()?;
                if d != 1.0 {
                    return Err(p.err(format!("only discount 1.0 is supported, found {d}")));
                }
            }
            "values" => {
                let v = p.next()?;
                if v != "reward" {
                    return Err(p.err(format!("only 'values: reward' is supported, found {v:?}")));
                }
            }
            "states" => states = Some(p.name_list()?),
            "actions" => actions = Some(p.name_list()?),
            "observations" => observations = Some(p.name_list()?),
            "start" => {
                let mut toks = Vec::new();
                while p.peek().is_some() && !p.at_section() {
                    toks.push(p.next()?);
                }
                start_tokens = Some(toks);
            }
            _ => unreachable!("section list"),
        }
    }
    let states = states.ok_or_else(|| p.err("missing states"))?;
    let actions = actions.ok_or_else(|| p.err("missing actions"))?;
    let observations = observations.ok_or_else(|| p.err("missing observations"))?;
    let (ns, na, no) = (states.len(), actions.len(), observations.len());
    let start = match start_tokens {
        None => vec![1.0 / ns as f64; ns],
        Some(t) if t.len() == 1 && t[0] == "uniform" => vec![1.0 / ns as f64; ns],
        Some(t) if t.len() == ns => t
            .iter()
            .map(|v| v.parse::<f64>().map_err(|_| p.err(format!("bad start entry {v:?}"))))
            .collect::<Result<_>>()?,
        Some(t) => return Err(p.err(format!("start has {} entries, expected {ns}", t.len()))),
    };

    let mut trans: Vec<Vec<BTreeMap<usize, f64>>> = vec![vec![BTreeMap::new(); ns]; na];
    let mut obs = vec![vec![vec![0.0; no]; ns]; na];
    let mut reward = vec![vec![0.0; ns]; na];
    while p.peek().is_some() {
        let key = p.next()?;
        p.expect(":")?;
        match key.as_str() {
            "T" => {
                let a = p.target(&actions)?;
                let rows: Vec<(usize, Vec<f64>)> = if p.peek() == Some(":") {
                    p.next()?;
                    let s = p.target(&states)?;
                    if p.peek() == Some(":") {
                        p.next()?;
                        let s2 = p.target(&states)?;
                        let v = p.number()?;
                        for &aa in &expand(&a, na) {
                            for &ss in &expand(&s, ns) {
                                for &tt in &expand(&s2, ns) {
                                    trans[aa][ss].insert(tt, v);
                                }
                            }
                        }
                        continue;
                    }
                    let row = match p.peek() {
                        Some("uniform") => {
                            p.next()?;
                            vec![1.0 / ns as f64; ns]
                        }
                        _ => p.numbers(ns)?,
                    };
                    expand(&s, ns).into_iter().map(|ss| (ss, row.clone())).collect()
                } else {
                    match p.peek() {
                        Some("identity") => {
                            p.next()?;
                            (0..ns)
                                .map(|ss| (ss, (0..ns).map(|t| (t == ss) as u8 as f64).collect()))
                                .collect()
                        }
                        Some("uniform") => {
                            p.next()?;
                            (0..ns).map(|ss| (ss, vec![1.0 / ns as f64; ns])).collect()
                        }
                        _ => (0..ns).map(|ss| Ok((ss, p.numbers(ns)?))).collect::<Result<_>>()?,
                    }
                };
                for &aa in &expand(&a, na) {
                    for (ss, row) in &rows {
                        trans[aa][*ss] = row
                            .iter()
                            .enumerate()
                            .map(|(t, &v)| (t, v))
                            .collect();
                    }
                }
            }
            "O" => {
                let a = p.target(&actions)?;
                let rows: Vec<(usize, Vec<f64>)> = if p.peek() == Some(":") {
                    p.next()?;
                    let s = p.target(&states)?;
                    if p.peek() == Some(":") {
                        p.next()?;
                        let o = p.target(&observations)?;
                        let v = p.number()?;
                        for &aa in &expand(&a, na) {
                            for &ss in &expand(&s, ns) {
                                for &oo in &expand(&o, no) {
                                    obs[aa][ss][oo] = v;
                                }
                            }
                        }
                        continue;
                    }
                    let row = match p.peek() {
                        Some("uniform") => {
                            p.next()?;
                            vec![1.0 / no as f64; no]
                        }
                        _ => p.numbers(no)?,
                    };
                    expand(&s, ns).into_iter().map(|ss| (ss, row.clone())).collect()
                } else if p.peek() == Some("uniform") {
                    p.next()?;
                    (0..ns).map(|ss| (ss, vec![1.0 / no as f64; no])).collect()
                } else {
                    (0..ns).map(|ss| Ok((ss, p.numbers(no)?))).collect::<Result<_>>()?
                };
                for &aa in &expand(&a, na) {
                    for (ss, row) in &rows {
                        obs[aa][*ss] = row.clone();
                    }
                }
            }
            "R" => {
                let a = p.target(&actions)?;
                p.expect(":")?;
                let s = p.target(&states)?;
                p.expect(":")?;
                let s2 = p.next()?;
                p.expect(":")?;
                let o = p.next()?;
                if s2 != "*" || o != "*" {
                    return Err(p.err("rewards depending on end state or observation are not supported"));
                }
                let v = p.number()?;
                for &aa in &expand(&a, na) {
                    for &ss in &expand(&s, ns) {
                        reward[aa][ss] = v;
                    }
                }
            }
            other => {
                p.pos -= 2;
                return Err(p.err(format!("unexpected section {other:?}")));
            }
        }
    }
    let trans = trans
        .into_iter()
        .map(|rows| {
            rows.into_iter()
                .map(|row| row.into_iter().filter(|&(_, v)| v != 0.0).collect())
                .collect()
        })
        .collect();
    let model = PomdpModel {
        states,
        actions,
        observations,
        start,
        trans,
        obs,
        reward,
    };
    model.validate()?;
    Ok(model)
}

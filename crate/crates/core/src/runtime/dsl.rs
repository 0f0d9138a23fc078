//! Pipeline wiring language.
//!
//! ```text
//! expr := IDENT '(' [expr (',' expr)*] ')'
//! ```
//!
//! `cmComponent()`, `bmComponent()` and `vmComponent()` are the extractor
//! pipelines; every other identifier must name a registered analysis
//! component. The outermost call is the sink.

use std::fmt;

use super::config::Pipeline;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    CodeStream,
    BuildModel,
    VarModel,
    PcIndex,
    Table,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Kind::CodeStream => "code-model stream",
            Kind::BuildModel => "build model",
            Kind::VarModel => "variability model",
            Kind::PcIndex => "presence-condition index",
            Kind::Table => "result table",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    PcFinder,
    FeatureEffects,
    DeadBlocks,
    BlockMetrics,
}

pub struct Signature {
    pub name: &'static str,
    pub inputs: &'static [(Kind, bool)],
    pub output: Kind,
}

impl Component {
    pub const ALL: [Component; 4] =
        [Component::PcFinder, Component::FeatureEffects, Component::DeadBlocks, Component::BlockMetrics];

    /// Inputs as `(kind, required)`; optional inputs come last.
    pub fn signature(self) -> Signature {
        match self {
            Component::PcFinder => Signature {
                name: "PcFinder",
                inputs: &[(Kind::CodeStream, true), (Kind::BuildModel, false)],
                output: Kind::PcIndex,
            },
            Component::FeatureEffects => {
                Signature { name: "FeatureEffects", inputs: &[(Kind::PcIndex, true)], output: Kind::Table }
            }
            Component::DeadBlocks => Signature {
                name: "DeadBlocks",
                inputs: &[(Kind::CodeStream, true), (Kind::BuildModel, true), (Kind::VarModel, true)],
                output: Kind::Table,
            },
            Component::BlockMetrics => {
                Signature { name: "BlockMetrics", inputs: &[(Kind::CodeStream, true)], output: Kind::Table }
            }
        }
    }

    pub fn name(self) -> &'static str {
        self.signature().name
    }

    pub fn lookup(name: &str) -> Option<Component> {
        Component::ALL.into_iter().find(|c| c.name() == name)
    }

    /// Output file stem, e.g. `feature_effects`.
    pub fn file_stem(self) -> String {
        snake_case(self.name())
    }
}

pub fn snake_case(name: &str) -> String {
    let mut out = String::new();
    for (i, c) in name.chars().enumerate() {
        if c.is_ascii_uppercase() {
            if i > 0 {
                out.push('_');
            }
            out.push(c.to_ascii_lowercase());
        } else {
            out.push(c);
        }
    }
    out
}

pub fn terminal(name: &str) -> Option<Pipeline> {
    match name {
        "cmComponent" => Some(Pipeline::Code),
        "bmComponent" => Some(Pipeline::Build),
        "vmComponent" => Some(Pipeline::Vm),
        _ => None,
    }
}

fn terminal_name(p: Pipeline) -> &'static str {
    match p {
        Pipeline::Code => "cmComponent",
        Pipeline::Build => "bmComponent",
        Pipeline::Vm => "vmComponent",
    }
}

fn pipeline_kind(p: Pipeline) -> Kind {
    match p {
        Pipeline::Code => Kind::CodeStream,
        Pipeline::Build => Kind::BuildModel,
        Pipeline::Vm => Kind::VarModel,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Terminal(Pipeline),
    Analysis(Component),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphNode {
    pub kind: NodeKind,
    /// Indices of producer nodes, in argument order.
    pub inputs: Vec<usize>,
    /// 1-based column of the node's identifier.
    pub position: usize,
}

impl GraphNode {
    pub fn name(&self) -> &'static str {
        match self.kind {
            NodeKind::Terminal(p) => terminal_name(p),
            NodeKind::Analysis(c) => c.name(),
        }
    }

    pub fn output(&self) -> Kind {
        match self.kind {
            NodeKind::Terminal(p) => pipeline_kind(p),
            NodeKind::Analysis(c) => c.signature().output,
        }
    }
}

/// Nodes are stored producers-first, so index order is a valid execution order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineGraph {
    pub nodes: Vec<GraphNode>,
    pub sink: usize,
}

impl PipelineGraph {
    pub fn pipelines(&self) -> Vec<Pipeline> {
        let mut out: Vec<Pipeline> = self
            .nodes
            .iter()
            .filter_map(|n| match n.kind {
                NodeKind::Terminal(p) => Some(p),
                _ => None,
            })
            .collect();
        out.sort();
        out
    }

    pub fn component(&self, name: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.name() == name)
    }

    /// Canonical call-syntax form, e.g. `BlockMetrics(cmComponent())`.
    pub fn to_dsl(&self) -> String {
        let mut out = String::new();
        self.write_call(self.sink, &mut out);
        out
    }

    fn write_call(&self, id: usize, out: &mut String) {
        let node = &self.nodes[id];
        out.push_str(node.name());
        out.push('(');
        for (i, &input) in node.inputs.iter().enumerate() {
            if i > 0 {
                out.push_str(", ");
            }
            self.write_call(input, out);
        }
        out.push(')');
    }

    /// Indented tree view from the sink down.
    pub fn render(&self) -> String {
        let mut out = String::new();
        self.render_node(self.sink, 0, &mut out);
        out
    }

    fn render_node(&self, id: usize, depth: usize, out: &mut String) {
        let node = &self.nodes[id];
        out.push_str(&format!("{}{} -> {}\n", "  ".repeat(depth), node.name(), node.output()));
        for &input in &node.inputs {
            self.render_node(input, depth + 1, out);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DslError {
    #[error("column {position}: {message}")]
    ParseError { position: usize, message: String },
    #[error("column {position}: unknown component `{name}`")]
    UnknownComponent { name: String, position: usize },
    #[error("column {position}: `{name}` takes {expected} argument(s), got {found}")]
    ArityMismatch { name: String, position: usize, expected: String, found: usize },
    #[error("column {position}: `{name}` expects a {expected} here, got a {found}")]
    KindMismatch { name: String, position: usize, expected: Kind, found: Kind },
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Token {
    Ident(String),
    Open,
    Close,
    Comma,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Token)>, DslError> {
    let mut out = Vec::new();
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        let col = text[..i].chars().count() + 1;
        match c {
            c if c.is_whitespace() => {}
            '(' => out.push((col, Token::Open)),
            ')' => out.push((col, Token::Close)),
            ',' => out.push((col, Token::Comma)),
            c if c.is_ascii_alphabetic() || c == '_' => {
                let mut ident = String::from(c);
                while let Some(&(_, n)) = chars.peek() {
                    if n.is_ascii_alphanumeric() || n == '_' {
                        ident.push(n);
                        chars.next();
                    } else {
                        break;
                    }
                }
                out.push((col, Token::Ident(ident)));
            }
            other => {
                return Err(DslError::ParseError { position: col, message: format!("unexpected character `{other}`") })
            }
        }
    }
    Ok(out)
}

struct Call {
    name: String,
    position: usize,
    args: Vec<Call>,
}

struct Parser {
    tokens: Vec<(usize, Token)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn column(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.0)
    }

    fn error(&self, message: impl Into<String>) -> DslError {
        DslError::ParseError { position: self.column(), message: message.into() }
    }

    fn expect(&mut self, token: Token, what: &str) -> Result<(), DslError> {
        match self.tokens.get(self.pos) {
            Some((_, t)) if *t == token => {
                self.pos += 1;
                Ok(())
            }
            _ => Err(self.error(format!("expected {what}"))),
        }
    }

    fn call(&mut self) -> Result<Call, DslError> {
        let (position, name) = match self.tokens.get(self.pos) {
            Some((p, Token::Ident(n))) => (*p, n.clone()),
            _ => return Err(self.error("expected component name")),
        };
        self.pos += 1;
        self.expect(Token::Open, "`(`")?;
        let mut args = Vec::new();
        if !matches!(self.tokens.get(self.pos), Some((_, Token::Close))) {
            loop {
                args.push(self.call()?);
                match self.tokens.get(self.pos) {
                    Some((_, Token::Comma)) => self.pos += 1,
                    _ => break,
                }
            }
        }
        self.expect(Token::Close, "`,` or `)`")?;
        Ok(Call { name, position, args })
    }
}

struct Builder {
    nodes: Vec<GraphNode>,
}

impl Builder {
    fn node(&mut self, call: &Call) -> Result<usize, DslError> {
        if let Some(p) = terminal(&call.name) {
            if !call.args.is_empty() {
                return Err(DslError::ArityMismatch {
                    name: call.name.clone(),
                    position: call.position,
                    expected: "0".into(),
                    found: call.args.len(),
                });
            }
            if let Some(existing) = self.nodes.iter().position(|n| n.kind == NodeKind::Terminal(p)) {
                return Ok(existing);
            }
            self.nodes.push(GraphNode { kind: NodeKind::Terminal(p), inputs: Vec::new(), position: call.position });
            return Ok(self.nodes.len() - 1);
        }
        let component = Component::lookup(&call.name)
            .ok_or_else(|| DslError::UnknownComponent { name: call.name.clone(), position: call.position })?;
        let sig = component.signature();
        let required = sig.inputs.iter().filter(|(_, r)| *r).count();
        if call.args.len() < required || call.args.len() > sig.inputs.len() {
            let expected =
                if required == sig.inputs.len() { required.to_string() } else { format!("{required}..{}", sig.inputs.len()) };
            return Err(DslError::ArityMismatch {
                name: call.name.clone(),
                position: call.position,
                expected,
                found: call.args.len(),
            });
        }
        let mut inputs = Vec::new();
        for (arg, (kind, _)) in call.args.iter().zip(sig.inputs) {
            let id = self.node(arg)?;
            let found = self.nodes[id].output();
            if found != *kind {
                return Err(DslError::KindMismatch {
                    name: call.name.clone(),
                    position: arg.position,
                    expected: *kind,
                    found,
                });
            }
            inputs.push(id);
        }
        self.nodes.push(GraphNode { kind: NodeKind::Analysis(component), inputs, position: call.position });
        Ok(self.nodes.len() - 1)
    }
}

pub fn parse_pipeline_dsl(text: &str) -> Result<PipelineGraph, DslError> {
    let tokens = tokenize(text)?;
    let mut parser = Parser { tokens, pos: 0, end: text.chars().count() + 1 };
    let call = parser.call()?;
    if parser.pos < parser.tokens.len() {
        return Err(parser.error("unexpected input after pipeline expression"));
    }
    let mut builder = Builder { nodes: Vec::new() };
    let sink = builder.node(&call)?;
    if let NodeKind::Terminal(_) = builder.nodes[sink].kind {
        return Err(DslError::KindMismatch {
            name: call.name,
            position: call.position,
            expected: Kind::Table,
            found: builder.nodes[sink].output(),
        });
    }
    Ok(PipelineGraph { nodes: builder.nodes, sink })
}

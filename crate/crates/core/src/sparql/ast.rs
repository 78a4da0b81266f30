use serde::{Deserialize, Serialize};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const RDF_FIRST: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#first";
pub const RDF_REST: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#rest";
pub const RDF_NIL: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#nil";
pub const RDF_LANG_STRING: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";
pub const XSD: &str = "http://www.w3.org/2001/XMLSchema#";
pub const XSD_STRING: &str = "http://www.w3.org/2001/XMLSchema#string";
pub const XSD_INTEGER: &str = "http://www.w3.org/2001/XMLSchema#integer";
pub const XSD_DECIMAL: &str = "http://www.w3.org/2001/XMLSchema#decimal";
pub const XSD_DOUBLE: &str = "http://www.w3.org/2001/XMLSchema#double";
pub const XSD_BOOLEAN: &str = "http://www.w3.org/2001/XMLSchema#boolean";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum QueryType {
    Select,
    Ask,
    Construct,
    Describe,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Literal {
    pub value: String,
    /// Explicit or implied datatype; `None` for plain and language-tagged strings.
    pub datatype: Option<String>,
    pub language: Option<String>,
}

impl Literal {
    /// Datatype in the RDF 1.1 sense: plain strings are `xsd:string`,
    /// language-tagged strings are `rdf:langString`.
    pub fn effective_datatype(&self) -> &str {
        match (&self.datatype, &self.language) {
            (Some(dt), _) => dt,
            (None, Some(_)) => RDF_LANG_STRING,
            (None, None) => XSD_STRING,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Term {
    Variable(String),
    Iri(String),
    Literal(Literal),
    BlankNode(String),
    /// Property path longer than a single predicate; only valid in predicate position.
    Path(PropertyPath),
}

impl Term {
    pub fn as_iri(&self) -> Option<&str> {
        match self {
            Term::Iri(i) => Some(i),
            _ => None,
        }
    }

    pub fn is_variable_like(&self) -> bool {
        matches!(self, Term::Variable(_) | Term::BlankNode(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropertyPath {
    Iri(String),
    Inverse(Box<PropertyPath>),
    Sequence(Vec<PropertyPath>),
    Alternative(Vec<PropertyPath>),
    ZeroOrMore(Box<PropertyPath>),
    OneOrMore(Box<PropertyPath>),
    ZeroOrOne(Box<PropertyPath>),
    /// `!(a|^b)`; the flag marks inverse members.
    Negated(Vec<(String, bool)>),
}

impl PropertyPath {
    /// Every predicate IRI mentioned anywhere in the path.
    pub fn iris(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_iris(&mut out);
        out
    }

    fn collect_iris<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            PropertyPath::Iri(i) => out.push(i),
            PropertyPath::Inverse(p)
            | PropertyPath::ZeroOrMore(p)
            | PropertyPath::OneOrMore(p)
            | PropertyPath::ZeroOrOne(p) => p.collect_iris(out),
            PropertyPath::Sequence(ps) | PropertyPath::Alternative(ps) => {
                ps.iter().for_each(|p| p.collect_iris(out))
            }
            PropertyPath::Negated(set) => out.extend(set.iter().map(|(i, _)| i.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TriplePattern {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
    /// Set when the pattern sits inside `FILTER NOT EXISTS` or `MINUS`.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub negated: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupPattern(pub Vec<PatternElement>);

#[derive(Debug, Clone, PartialEq)]
pub enum PatternElement {
    Triples(Vec<TriplePattern>),
    Group(GroupPattern),
    Optional(GroupPattern),
    Minus(GroupPattern),
    Union(Vec<GroupPattern>),
    Graph { name: Term, pattern: GroupPattern },
    Service { silent: bool, endpoint: Term, pattern: GroupPattern },
    Filter(Expression),
    Bind { expression: Expression, variable: String },
    Values(InlineData),
    SubSelect(Box<SubQuery>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct InlineData {
    pub variables: Vec<String>,
    /// `None` cells are `UNDEF`.
    pub rows: Vec<Vec<Option<Term>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Or,
    And,
    Equal,
    NotEqual,
    Less,
    Greater,
    LessOrEqual,
    GreaterOrEqual,
    Add,
    Subtract,
    Multiply,
    Divide,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Or => "||",
            BinaryOp::And => "&&",
            BinaryOp::Equal => "=",
            BinaryOp::NotEqual => "!=",
            BinaryOp::Less => "<",
            BinaryOp::Greater => ">",
            BinaryOp::LessOrEqual => "<=",
            BinaryOp::GreaterOrEqual => ">=",
            BinaryOp::Add => "+",
            BinaryOp::Subtract => "-",
            BinaryOp::Multiply => "*",
            BinaryOp::Divide => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnaryOp {
    Not,
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Function {
    /// Built-in or aggregate, upper-cased.
    Builtin(String),
    Iri(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expression {
    Variable(String),
    Iri(String),
    Literal(Literal),
    Binary { op: BinaryOp, left: Box<Expression>, right: Box<Expression> },
    Unary { op: UnaryOp, operand: Box<Expression> },
    In { operand: Box<Expression>, list: Vec<Expression>, negated: bool },
    Call {
        function: Function,
        distinct: bool,
        /// `COUNT(*)`
        star: bool,
        args: Vec<Expression>,
        separator: Option<String>,
    },
    Exists { negated: bool, pattern: GroupPattern },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectModifier {
    Distinct,
    Reduced,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProjectionItem {
    Variable(String),
    Expression { expression: Expression, alias: String },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Projection {
    All,
    Items(Vec<ProjectionItem>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectClause {
    pub modifier: Option<SelectModifier>,
    pub projection: Projection,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupCondition {
    pub expression: Expression,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderCondition {
    pub descending: bool,
    pub expression: Expression,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolutionModifiers {
    pub group_by: Vec<GroupCondition>,
    pub having: Vec<Expression>,
    pub order_by: Vec<OrderCondition>,
    pub limit: Option<u64>,
    pub offset: Option<u64>,
}

impl SolutionModifiers {
    pub fn is_empty(&self) -> bool {
        self == &SolutionModifiers::default()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubQuery {
    pub select: SelectClause,
    pub where_clause: GroupPattern,
    pub modifiers: SolutionModifiers,
    pub values: Option<InlineData>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryForm {
    Select(SelectClause),
    Construct { template: Vec<TriplePattern> },
    Ask,
    /// Empty target list means `DESCRIBE *`.
    Describe { targets: Vec<Term> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetClause {
    pub named: bool,
    pub iri: String,
}

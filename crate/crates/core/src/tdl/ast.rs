use alloc::boxed::Box;
use alloc::string::String;
use alloc::vec::Vec;

use crate::value::Value;

/// Byte range in the source. Spans never take part in equality, so a
/// re-parsed pretty-printed program compares equal to the original.
#[derive(Debug, Clone, Copy, Default)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn to(self, other: Span) -> Span {
        Span::new(self.start, other.end)
    }

    /// 1-based line and column of `start`.
    pub fn line_col(&self, src: &str) -> (usize, usize) {
        let before = &src[..self.start.min(src.len())];
        let line = before.matches('\n').count() + 1;
        let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
        (line, col)
    }
}

impl PartialEq for Span {
    fn eq(&self, _: &Span) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Program {
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pattern {
    Name(String),
    Pair(String, String),
}

impl Pattern {
    pub fn names(&self) -> Vec<&str> {
        match self {
            Pattern::Name(n) => alloc::vec![n.as_str()],
            Pattern::Pair(a, b) => alloc::vec![a.as_str(), b.as_str()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case {
    pub value: Expr,
    pub body: Vec<Stmt>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Wait(Expr),
    Let(Pattern, Expr),
    If {
        cond: Expr,
        then: Vec<Stmt>,
        otherwise: Option<Vec<Stmt>>,
    },
    Switch {
        scrutinee: Expr,
        cases: Vec<Case>,
        default: Option<Vec<Stmt>>,
    },
    Select {
        binder: String,
        domain: Expr,
        filter: Option<Expr>,
        minimizing: Option<Expr>,
        body: Vec<Stmt>,
        otherwise: Option<Vec<Stmt>>,
    },
    Return {
        stop: bool,
        updates: Vec<UpdateExpr>,
    },
    Emit(Vec<UpdateExpr>),
    Await(Expr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UnOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Or,
    And,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    Contains,
    Add,
    Sub,
    Mul,
    Div,
    Rem,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Or => "or",
            BinOp::And => "and",
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::Contains => "contains",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Rem => "%",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Or => 1,
            BinOp::And => 2,
            BinOp::Eq | BinOp::Ne | BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Contains => 4,
            BinOp::Add | BinOp::Sub => 5,
            BinOp::Mul | BinOp::Div | BinOp::Rem => 6,
        }
    }
}

/// A property name written literally (`loc`, `"a b"`) or computed
/// (`($proc)`, `$t`).
#[derive(Debug, Clone, PartialEq)]
pub enum NameSlot {
    Lit(String),
    Dyn(Box<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    pub kind: ExprKind,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ExprKind {
    /// Int, float, string or boolean literal.
    Lit(Value),
    Unit,
    Pair(Box<Expr>, Box<Expr>),
    List(Vec<Expr>),
    EntityLit(String),
    WorldLit(String),
    Me,
    MyWorld,
    Param(String),
    Var(String),
    Field(Box<Expr>, NameSlot),
    Call(String, Vec<Expr>),
    Range(Box<Expr>, Box<Expr>),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn new(kind: ExprKind, span: Span) -> Self {
        Expr { kind, span }
    }

    /// Splits `base.key` into its parts.
    pub fn as_place(&self) -> Option<(&Expr, &NameSlot)> {
        match &self.kind {
            ExprKind::Field(base, key) => Some((base, key)),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GuardExpr {
    Exists(Expr),
    NotExists(Expr),
    Compare(BinOp, Expr, Expr),
}

/// Update expressions keep places (`base.key`) as field expressions.
#[derive(Debug, Clone, PartialEq)]
pub enum UpdateExpr {
    SetData(Expr, Expr),
    DeleteData(Expr),
    SetTransition {
        place: Expr,
        semantics: NameSlot,
        source: Expr,
    },
    DeleteTransition(Expr),
    StartProcess(Expr, NameSlot),
    CancelProcess(Expr),
    RebindProcess(Expr, NameSlot),
    /// `create_entity world.name`
    CreateEntity(Expr),
    DeleteEntity(Expr),
    AddWorld {
        world: Expr,
        from: Option<Expr>,
    },
    DeleteWorld(Expr),
    CopyProperties {
        src: Expr,
        dst: Expr,
        keys: Option<Vec<NameSlot>>,
    },
    Guarded(GuardExpr, Box<UpdateExpr>),
    Macro {
        name: String,
        args: Vec<Expr>,
        span: Span,
    },
}

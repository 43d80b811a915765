//! Runtime values and their Python-compatible text forms.

use std::cell::RefCell;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use indexmap::IndexMap;

use crate::ast::FuncDef;

pub type Dict = IndexMap<Key, (Value, Value)>;
pub type Set = IndexMap<Key, Value>;

#[derive(Clone)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(Rc<str>),
    List(Rc<RefCell<Vec<Value>>>),
    Tuple(Rc<Vec<Value>>),
    Dict(Rc<RefCell<Dict>>),
    Set(Rc<RefCell<Set>>),
    Range(i64, i64, i64),
    Function(Rc<Function>),
    Builtin(&'static str),
    Method(Rc<BoundMethod>),
    /// A builtin type or exception class, by name.
    Type(Rc<str>),
    Exception(Rc<ExcObj>),
    Module(Rc<ModuleObj>),
    File(Rc<RefCell<FileObj>>),
    Match(Rc<MatchObj>),
}

pub struct Function {
    pub def: Rc<FuncDef>,
    pub defaults: Vec<Option<Value>>,
    pub kw_defaults: Vec<Option<Value>>,
    pub closure: Option<Rc<Scope>>,
}

pub struct BoundMethod {
    pub recv: Value,
    pub name: Rc<str>,
}

pub struct ExcObj {
    pub ty: Rc<str>,
    pub args: Vec<Value>,
}

pub struct ModuleObj {
    pub name: String,
    pub attrs: HashMap<String, Value>,
}

pub struct FileObj {
    pub path: String,
    pub mode: String,
    pub content: String,
    pub cursor: usize,
    pub closed: bool,
    /// The path as the snippet spelled it, for error messages.
    pub shown_path: String,
}

pub struct MatchObj {
    pub groups: Vec<Option<String>>,
    pub named: Vec<(String, Option<String>)>,
    pub start: usize,
    pub end: usize,
}

/// A local variable scope for a function call or comprehension.
pub struct Scope {
    pub vars: RefCell<HashMap<String, Value>>,
    pub parent: Option<Rc<Scope>>,
    pub globals_decl: RefCell<Vec<String>>,
    pub nonlocal_decl: RefCell<Vec<String>>,
}

impl Scope {
    pub fn new(parent: Option<Rc<Scope>>) -> Rc<Scope> {
        Rc::new(Scope {
            vars: RefCell::new(HashMap::new()),
            parent,
            globals_decl: RefCell::new(Vec::new()),
            nonlocal_decl: RefCell::new(Vec::new()),
        })
    }
}

/// Hashable projection of a value, used for dict keys and set members.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Key {
    None,
    Int(i64),
    Float(u64),
    Str(Rc<str>),
    Tuple(Vec<Key>),
    Type(Rc<str>),
    Ident(usize),
}

impl Key {
    pub fn from_value(v: &Value) -> Result<Key, String> {
        Ok(match v {
            Value::None => Key::None,
            Value::Bool(b) => Key::Int(*b as i64),
            Value::Int(i) => Key::Int(*i),
            Value::Float(f) => {
                if f.fract() == 0.0 && f.abs() < 9.2e18 {
                    Key::Int(*f as i64)
                } else {
                    Key::Float(f.to_bits())
                }
            }
            Value::Str(s) => Key::Str(s.clone()),
            Value::Tuple(items) => Key::Tuple(
                items
                    .iter()
                    .map(Key::from_value)
                    .collect::<Result<_, _>>()?,
            ),
            Value::Type(t) => Key::Type(t.clone()),
            Value::Function(f) => Key::Ident(Rc::as_ptr(f) as *const u8 as usize),
            Value::Builtin(b) => Key::Ident(b.as_ptr() as usize),
            other => return Err(format!("unhashable type: '{}'", other.type_name())),
        })
    }
}

impl Value {
    pub fn str(s: impl AsRef<str>) -> Value {
        Value::Str(Rc::from(s.as_ref()))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Rc::new(RefCell::new(items)))
    }

    pub fn tuple(items: Vec<Value>) -> Value {
        Value::Tuple(Rc::new(items))
    }

    pub fn dict(d: Dict) -> Value {
        Value::Dict(Rc::new(RefCell::new(d)))
    }

    pub fn type_name(&self) -> String {
        match self {
            Value::None => "NoneType".into(),
            Value::Bool(_) => "bool".into(),
            Value::Int(_) => "int".into(),
            Value::Float(_) => "float".into(),
            Value::Str(_) => "str".into(),
            Value::List(_) => "list".into(),
            Value::Tuple(_) => "tuple".into(),
            Value::Dict(_) => "dict".into(),
            Value::Set(_) => "set".into(),
            Value::Range(..) => "range".into(),
            Value::Function(_) => "function".into(),
            Value::Builtin(_) => "builtin_function_or_method".into(),
            Value::Method(_) => "method".into(),
            Value::Type(_) => "type".into(),
            Value::Exception(e) => e.ty.to_string(),
            Value::Module(_) => "module".into(),
            Value::File(_) => "TextIOWrapper".into(),
            Value::Match(_) => "re.Match".into(),
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(f) => *f != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(l) => !l.borrow().is_empty(),
            Value::Tuple(t) => !t.is_empty(),
            Value::Dict(d) => !d.borrow().is_empty(),
            Value::Set(s) => !s.borrow().is_empty(),
            Value::Range(start, stop, step) => range_len(*start, *stop, *step) > 0,
            _ => true,
        }
    }

    /// `str(value)`
    pub fn to_str(&self) -> String {
        match self {
            Value::Str(s) => s.to_string(),
            Value::Exception(e) => exc_message(e),
            _ => self.repr(),
        }
    }

    /// `repr(value)`
    pub fn repr(&self) -> String {
        let mut out = String::new();
        self.write_repr(&mut out, 0);
        out
    }

    fn write_repr(&self, out: &mut String, depth: usize) {
        if depth > 64 {
            out.push_str("...");
            return;
        }
        match self {
            Value::None => out.push_str("None"),
            Value::Bool(true) => out.push_str("True"),
            Value::Bool(false) => out.push_str("False"),
            Value::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Value::Float(f) => out.push_str(&float_repr(*f)),
            Value::Str(s) => out.push_str(&str_repr(s)),
            Value::List(l) => {
                out.push('[');
                for (i, v) in l.borrow().iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    v.write_repr(out, depth + 1);
                }
                out.push(']');
            }
            Value::Tuple(t) => {
                out.push('(');
                for (i, v) in t.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    v.write_repr(out, depth + 1);
                }
                if t.len() == 1 {
                    out.push(',');
                }
                out.push(')');
            }
            Value::Dict(d) => {
                out.push('{');
                for (i, (k, v)) in d.borrow().values().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    k.write_repr(out, depth + 1);
                    out.push_str(": ");
                    v.write_repr(out, depth + 1);
                }
                out.push('}');
            }
            Value::Set(s) => {
                let s = s.borrow();
                if s.is_empty() {
                    out.push_str("set()");
                    return;
                }
                out.push('{');
                for (i, v) in s.values().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    v.write_repr(out, depth + 1);
                }
                out.push('}');
            }
            Value::Range(a, b, c) => {
                if *c == 1 {
                    let _ = write!(out, "range({a}, {b})");
                } else {
                    let _ = write!(out, "range({a}, {b}, {c})");
                }
            }
            Value::Function(f) => {
                let _ = write!(out, "<function {}>", f.def.name);
            }
            Value::Builtin(name) => {
                let _ = write!(out, "<built-in function {name}>");
            }
            Value::Method(m) => {
                let _ = write!(
                    out,
                    "<built-in method {} of {} object>",
                    m.name,
                    m.recv.type_name()
                );
            }
            Value::Type(t) => {
                let _ = write!(out, "<class '{t}'>");
            }
            Value::Exception(e) => {
                out.push_str(&e.ty);
                out.push('(');
                for (i, a) in e.args.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    a.write_repr(out, depth + 1);
                }
                out.push(')');
            }
            Value::Module(m) => {
                let _ = write!(out, "<module '{}'>", m.name);
            }
            Value::File(f) => {
                let f = f.borrow();
                let _ = write!(
                    out,
                    "<_io.TextIOWrapper name='{}' mode='{}'>",
                    f.path, f.mode
                );
            }
            Value::Match(m) => {
                let _ = write!(
                    out,
                    "<re.Match object; span=({}, {}), match={}>",
                    m.start,
                    m.end,
                    str_repr(m.groups[0].as_deref().unwrap_or(""))
                );
            }
        }
    }
}

pub fn exc_message(e: &ExcObj) -> String {
    match e.args.len() {
        0 => String::new(),
        1 if &*e.ty == "KeyError" => e.args[0].repr(),
        1 => e.args[0].to_str(),
        _ => Value::tuple(e.args.clone()).repr(),
    }
}

pub fn range_len(start: i64, stop: i64, step: i64) -> i64 {
    if step > 0 && start < stop {
        (stop - start - 1) / step + 1
    } else if step < 0 && start > stop {
        (start - stop - 1) / (-step) + 1
    } else {
        0
    }
}

/// Python's shortest round-tripping float repr.
pub fn float_repr(f: f64) -> String {
    if f.is_nan() {
        return "nan".into();
    }
    if f.is_infinite() {
        return if f > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if f == 0.0 {
        return if f.is_sign_negative() {
            "-0.0".into()
        } else {
            "0.0".into()
        };
    }
    let sci = format!("{f:e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("exponent");
    let negative = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let sign = if negative { "-" } else { "" };
    if (-4..16).contains(&exp) {
        let mut s = String::from(sign);
        if exp < 0 {
            s.push_str("0.");
            for _ in 0..(-exp - 1) {
                s.push('0');
            }
            s.push_str(&digits);
        } else {
            let int_len = exp as usize + 1;
            if digits.len() <= int_len {
                s.push_str(&digits);
                for _ in digits.len()..int_len {
                    s.push('0');
                }
                s.push_str(".0");
            } else {
                s.push_str(&digits[..int_len]);
                s.push('.');
                s.push_str(&digits[int_len..]);
            }
        }
        s
    } else {
        let mut s = String::from(sign);
        s.push_str(&digits[..1]);
        if digits.len() > 1 {
            s.push('.');
            s.push_str(&digits[1..]);
        }
        let _ = write!(s, "e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs());
        s
    }
}

pub fn str_repr(s: &str) -> String {
    let quote = if s.contains('\'') && !s.contains('"') {
        '"'
    } else {
        '\''
    };
    let mut out = String::with_capacity(s.len() + 2);
    out.push(quote);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if c == quote => {
                out.push('\\');
                out.push(c);
            }
            c if (c as u32) < 0x20 || c as u32 == 0x7f => {
                let _ = write!(out, "\\x{:02x}", c as u32);
            }
            c => out.push(c),
        }
    }
    out.push(quote);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_reprs_match_python() {
        assert_eq!(float_repr(1.0), "1.0");
        assert_eq!(float_repr(0.1), "0.1");
        assert_eq!(float_repr(2.5e-5), "2.5e-05");
        assert_eq!(float_repr(1e16), "1e+16");
        assert_eq!(float_repr(123456.789), "123456.789");
        assert_eq!(float_repr(-0.001), "-0.001");
        assert_eq!(float_repr(1.0 / 3.0), "0.3333333333333333");
        assert_eq!(float_repr(1e15), "1000000000000000.0");
    }

    #[test]
    fn string_reprs_pick_quotes() {
        assert_eq!(str_repr("a"), "'a'");
        assert_eq!(str_repr("it's"), "\"it's\"");
        assert_eq!(str_repr("a\nb"), "'a\\nb'");
    }

    #[test]
    fn container_reprs() {
        let t = Value::tuple(vec![Value::Int(1)]);
        assert_eq!(t.repr(), "(1,)");
        let l = Value::list(vec![Value::str("x"), Value::None, Value::Float(2.0)]);
        assert_eq!(l.repr(), "['x', None, 2.0]");
    }

    #[test]
    fn numeric_keys_unify() {
        assert_eq!(
            Key::from_value(&Value::Int(1)).unwrap(),
            Key::from_value(&Value::Float(1.0)).unwrap()
        );
        assert_eq!(
            Key::from_value(&Value::Bool(true)).unwrap(),
            Key::from_value(&Value::Int(1)).unwrap()
        );
        assert!(Key::from_value(&Value::list(vec![])).is_err());
    }
}

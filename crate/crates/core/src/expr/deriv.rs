use super::{pow_value, Expr, Func};

// Smart constructors. They collapse constant-only subtrees and the additive
// and multiplicative identities; anything else is built as-is.

fn cst(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => Some(*c),
        _ => None,
    }
}

fn folded(v: f64, fallback: Expr) -> Expr {
    if v.is_finite() {
        Expr::Const(v)
    } else {
        fallback
    }
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Const(c) => Expr::Const(-c),
        Expr::Neg(inner) => *inner,
        other => Expr::Neg(Box::new(other)),
    }
}

pub fn add(a: Expr, b: Expr) -> Expr {
    match (cst(&a), cst(&b)) {
        (Some(x), Some(y)) => folded(x + y, Expr::Add(Box::new(a), Box::new(b))),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    match (cst(&a), cst(&b)) {
        (Some(x), Some(y)) => folded(x - y, Expr::Sub(Box::new(a), Box::new(b))),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    match (cst(&a), cst(&b)) {
        (Some(x), Some(y)) => folded(x * y, Expr::Mul(Box::new(a), Box::new(b))),
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Const(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        (Some(-1.0), _) => neg(b),
        (_, Some(-1.0)) => neg(a),
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub fn div(a: Expr, b: Expr) -> Expr {
    match (cst(&a), cst(&b)) {
        (Some(x), Some(y)) if y != 0.0 => folded(x / y, Expr::Div(Box::new(a), Box::new(b))),
        (Some(x), _) if x == 0.0 && cst(&b) != Some(0.0) => Expr::Const(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub fn pow(a: Expr, e: f64) -> Expr {
    if e == 0.0 {
        return Expr::Const(1.0);
    }
    if e == 1.0 {
        return a;
    }
    if let Some(x) = cst(&a) {
        if let Ok(v) = pow_value(x, e) {
            return folded(v, Expr::Pow(Box::new(a), e));
        }
    }
    Expr::Pow(Box::new(a), e)
}

pub fn call(f: Func, a: Expr) -> Expr {
    if let Some(x) = cst(&a) {
        if let Ok(v) = f.apply(x) {
            return folded(v, Expr::Call(f, Box::new(a)));
        }
    }
    Expr::Call(f, Box::new(a))
}

/// `is_var` identifies the leaf nodes that are the differentiation variable.
pub(super) fn derivative<P>(e: &Expr, is_var: &P) -> Expr
where
    P: Fn(&Expr) -> bool,
{
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::State(_) | Expr::Param(_) => Expr::Const(if is_var(e) { 1.0 } else { 0.0 }),
        Expr::Neg(a) => neg(derivative(a, is_var)),
        Expr::Add(a, b) => add(derivative(a, is_var), derivative(b, is_var)),
        Expr::Sub(a, b) => sub(derivative(a, is_var), derivative(b, is_var)),
        Expr::Mul(a, b) => add(
            mul(derivative(a, is_var), (**b).clone()),
            mul((**a).clone(), derivative(b, is_var)),
        ),
        Expr::Div(a, b) => {
            let da = derivative(a, is_var);
            let db = derivative(b, is_var);
            if cst(&db) == Some(0.0) {
                return div(da, (**b).clone());
            }
            div(
                sub(mul(da, (**b).clone()), mul((**a).clone(), db)),
                pow((**b).clone(), 2.0),
            )
        }
        Expr::Pow(a, n) => {
            let da = derivative(a, is_var);
            if cst(&da) == Some(0.0) {
                return Expr::Const(0.0);
            }
            mul(mul(Expr::Const(*n), pow((**a).clone(), n - 1.0)), da)
        }
        Expr::Call(f, a) => {
            let da = derivative(a, is_var);
            if cst(&da) == Some(0.0) {
                return Expr::Const(0.0);
            }
            let u = (**a).clone();
            let outer = match f {
                Func::Sin => call(Func::Cos, u),
                Func::Cos => neg(call(Func::Sin, u)),
                Func::Exp => call(Func::Exp, u),
                Func::Ln => return div(da, u),
                Func::Tanh => sub(Expr::Const(1.0), pow(call(Func::Tanh, u), 2.0)),
                Func::Sqrt => return div(da, mul(Expr::Const(2.0), call(Func::Sqrt, u))),
            };
            mul(outer, da)
        }
    }
}

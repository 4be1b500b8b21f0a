use super::{BinOp, Expr};

const P_ADD: u8 = 1;
const P_MUL: u8 = 2;
const P_NEG: u8 = 3;
const P_POW: u8 = 4;
const P_ATOM: u8 = 5;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Bin(BinOp::Add | BinOp::Sub, ..) => P_ADD,
        Expr::Bin(BinOp::Mul | BinOp::Div, ..) => P_MUL,
        Expr::Neg(_) => P_NEG,
        Expr::Pow(..) => P_POW,
        _ => P_ATOM,
    }
}

fn num(v: f64) -> String {
    format!("{v}")
}

fn wrap(out: &mut String, e: &Expr, parens: bool) {
    if parens {
        out.push('(');
        write(out, e);
        out.push(')');
    } else {
        write(out, e);
    }
}

fn write(out: &mut String, e: &Expr) {
    match e {
        Expr::Num(v) => out.push_str(&num(*v)),
        Expr::Const(name, _) => out.push_str(name),
        Expr::Var { name, .. } => out.push_str(name),
        Expr::Neg(a) => {
            out.push('-');
            wrap(out, a, prec(a) < P_NEG);
        }
        Expr::Bin(op, a, b) => {
            let p = prec(e);
            wrap(out, a, prec(a) < p);
            out.push_str(match op {
                BinOp::Add => "+",
                BinOp::Sub => "-",
                BinOp::Mul => "*",
                BinOp::Div => "/",
            });
            wrap(out, b, prec(b) <= p);
        }
        Expr::Pow(a, r) => {
            wrap(out, a, prec(a) <= P_POW);
            out.push('^');
            if *r >= 0.0 && r.fract() == 0.0 {
                out.push_str(&num(*r));
            } else {
                out.push('(');
                out.push_str(&num(*r));
                out.push(')');
            }
        }
        Expr::Call(f, a) => {
            out.push_str(f.name());
            out.push('(');
            write(out, a);
            out.push(')');
        }
    }
}

/// Render with the fewest parentheses that re-parse to the same tree.
pub(super) fn pretty(e: &Expr) -> String {
    let mut s = String::new();
    write(&mut s, e);
    s
}

#[cfg(test)]
mod tests {
    use crate::exprdsl::parse;

    fn rt(s: &str) -> String {
        parse(s, &["a", "b", "c", "x"]).unwrap().to_string()
    }

    #[test]
    fn minimal_parentheses() {
        assert_eq!(rt("(1+b*c)/a"), "(1+b*c)/a");
        assert_eq!(rt("((a))"), "a");
        assert_eq!(rt("a-(b-c)"), "a-(b-c)");
        assert_eq!(rt("(a-b)-c"), "a-b-c");
        assert_eq!(rt("-(a*b)"), "-(a*b)");
        assert_eq!(rt("(-a)*b"), "-a*b");
        assert_eq!(rt("(-a)^2"), "(-a)^2");
        assert_eq!(rt("-a^2"), "-a^2");
        assert_eq!(rt("x^(8/3)"), "x^(2.6666666666666665)");
        assert_eq!(rt("x^-2"), "x^(-2)");
        assert_eq!(rt("sin(x)^2"), "sin(x)^2");
        assert_eq!(rt("2*pi"), "2*pi");
    }

    #[test]
    fn pretty_is_a_fixed_point() {
        for s in [
            "a*(b+c)^3-sqrt(x)/exp(-a)",
            "--a",
            "a^2^3",
            "(a^2)^3",
            "1e-7*x",
        ] {
            let once = rt(s);
            assert_eq!(rt(&once), once, "{s}");
        }
    }
}

use std::fmt::Write;

use super::*;

pub(crate) fn pretty_subject(s: &SubjectClass) -> String {
    let mut out = String::new();
    writeln!(out, "class {} {{", s.name).unwrap();
    for f in &s.fields {
        let init = expr_text(&f.init, s, None);
        writeln!(out, "    field {}: {} = {};", f.name, f.ty, init).unwrap();
    }
    for c in s.constructors.iter().filter(|c| !c.implicit) {
        writeln!(out, "    ctor({}) {{", params_text(c)).unwrap();
        block(&mut out, &c.body, s, c, 2);
        writeln!(out, "    }}").unwrap();
    }
    for m in &s.methods {
        let prefix = if m.observer { "observer fn" } else { "fn" };
        let ret = m.ret.map(|t| format!(" -> {t}")).unwrap_or_default();
        writeln!(out, "    {prefix} {}({}){ret} {{", m.name, params_text(m)).unwrap();
        block(&mut out, &m.body, s, m, 2);
        writeln!(out, "    }}").unwrap();
    }
    out.push_str("}\n");
    out
}

fn params_text(m: &MethodDecl) -> String {
    m.params
        .iter()
        .map(|p| format!("{}: {}", p.name, p.ty))
        .collect::<Vec<_>>()
        .join(", ")
}

fn block(out: &mut String, body: &[Stmt], s: &SubjectClass, m: &MethodDecl, depth: usize) {
    for stmt in body {
        stmt_text(out, stmt, s, m, depth);
    }
}

fn stmt_text(out: &mut String, stmt: &Stmt, s: &SubjectClass, m: &MethodDecl, depth: usize) {
    let pad = "    ".repeat(depth);
    let e = |x: &Expr| expr_text(x, s, Some(m));
    match &stmt.kind {
        StmtKind::Let { slot, init } => {
            let local = &m.locals[*slot as usize];
            writeln!(out, "{pad}let {}: {} = {};", local.name, local.ty, e(init)).unwrap();
        }
        StmtKind::Assign { var, value } => {
            writeln!(out, "{pad}{} = {};", var_name(*var, s, Some(m)), e(value)).unwrap();
        }
        StmtKind::Store { array, index, value } => {
            writeln!(out, "{pad}{}[{}] = {};", var_name(*array, s, Some(m)), e(index), e(value)).unwrap();
        }
        StmtKind::If {
            cond,
            then_body,
            else_body,
            ..
        } => {
            writeln!(out, "{pad}if ({}) {{", e(cond)).unwrap();
            block(out, then_body, s, m, depth + 1);
            if !else_body.is_empty() {
                writeln!(out, "{pad}}} else {{").unwrap();
                block(out, else_body, s, m, depth + 1);
            }
            writeln!(out, "{pad}}}").unwrap();
        }
        StmtKind::While { cond, bound, body, .. } => {
            writeln!(out, "{pad}while ({}) bound {bound} {{", e(cond)).unwrap();
            block(out, body, s, m, depth + 1);
            writeln!(out, "{pad}}}").unwrap();
        }
        StmtKind::Return(Some(v)) => writeln!(out, "{pad}return {};", e(v)).unwrap(),
        StmtKind::Return(None) => writeln!(out, "{pad}return;").unwrap(),
        StmtKind::Throw(name) => writeln!(out, "{pad}throw {name};").unwrap(),
    }
}

pub(crate) fn var_name(v: VarRef, s: &SubjectClass, m: Option<&MethodDecl>) -> String {
    match (v, m) {
        (VarRef::Field(i), _) => s.fields[i as usize].name.clone(),
        (VarRef::Param(i), Some(m)) => m.params[i as usize].name.clone(),
        (VarRef::Local(i), Some(m)) => m.locals[i as usize].name.clone(),
        _ => "?".to_string(),
    }
}

pub(crate) fn expr_text(e: &Expr, s: &SubjectClass, m: Option<&MethodDecl>) -> String {
    prec_text(e, s, m, 0)
}

fn prec_text(e: &Expr, s: &SubjectClass, m: Option<&MethodDecl>, outer: u8) -> String {
    match &e.kind {
        ExprKind::Int(v) if *v < 0 => format!("({v})"),
        ExprKind::Int(v) => v.to_string(),
        ExprKind::Bool(b) => b.to_string(),
        ExprKind::Var { var, .. } => var_name(*var, s, m),
        ExprKind::Index { array, index } => {
            format!("{}[{}]", prec_text(array, s, m, 9), prec_text(index, s, m, 0))
        }
        ExprKind::Length(a) => format!("{}.length", prec_text(a, s, m, 9)),
        ExprKind::NewArray(n) => format!("new int[{}]", prec_text(n, s, m, 0)),
        ExprKind::Neg(x) => format!("-{}", prec_text(x, s, m, 8)),
        ExprKind::Not(x) => format!("!{}", prec_text(x, s, m, 8)),
        ExprKind::Binary { op, lhs, rhs, .. } => {
            let p = op.precedence();
            let text = format!(
                "{} {} {}",
                prec_text(lhs, s, m, p),
                op.token(),
                prec_text(rhs, s, m, p + 1)
            );
            if p < outer {
                format!("({text})")
            } else {
                text
            }
        }
    }
}

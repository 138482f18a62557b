//! Enumeration of all substitutions solving a system `pattern_i = subject_i`.
//!
//! Pattern variables are bindable; subject variables are rigid. Solutions are
//! produced in Markov order: e-variables are bound in left-to-right preorder
//! and each one tries the shortest value first, so the first solution
//! reported is the Markov substitution.

use super::{Substitution, Term, Var, VarKind};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatchControl {
    Continue,
    Stop,
}

/// Work counters for matching; one unit per elementary comparison or
/// e-variable length trial.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MatchStats {
    pub work: u64,
}

enum Cont<'a> {
    Done,
    Seq(&'a [Term], &'a [Term], &'a Cont<'a>),
    Args(&'a [Term], &'a [Term], &'a Cont<'a>),
}

struct Engine<'f> {
    sub: Substitution,
    stats: MatchStats,
    cb: &'f mut dyn FnMut(&Substitution) -> MatchControl,
}

/// Calls `cb` for every solution of the system, in Markov order, until it
/// returns [`MatchControl::Stop`]. Returns true if stopped early.
pub fn for_each_match(
    eqs: &[(Term, Term)],
    stats: &mut MatchStats,
    cb: &mut dyn FnMut(&Substitution) -> MatchControl,
) -> bool {
    let pats: Vec<Term> = eqs.iter().map(|(p, _)| p.clone()).collect();
    let subs: Vec<Term> = eqs.iter().map(|(_, s)| s.clone()).collect();
    let mut eng = Engine { sub: Substitution::new(), stats: MatchStats::default(), cb };
    let stopped = eng.resume(&Cont::Args(&pats, &subs, &Cont::Done));
    stats.work += eng.stats.work;
    stopped
}

fn min_len(items: &[Term], sub: &Substitution) -> usize {
    items
        .iter()
        .map(|t| match t {
            Term::Var(v) if v.kind == VarKind::E => sub.get(v).map_or(0, |x| x.items().len()),
            _ => 1,
        })
        .sum()
}

impl<'f> Engine<'f> {
    fn resume(&mut self, k: &Cont<'_>) -> bool {
        match k {
            Cont::Done => (self.cb)(&self.sub) == MatchControl::Stop,
            Cont::Seq(p, s, next) => self.seq(p, s, next),
            Cont::Args(pa, sa, next) => {
                if pa.is_empty() {
                    self.resume(next)
                } else {
                    let rest = Cont::Args(&pa[1..], &sa[1..], next);
                    self.seq(pa[0].items(), sa[0].items(), &rest)
                }
            }
        }
    }

    fn with_binding(&mut self, v: &Var, value: Term, rest: &[Term], s: &[Term], k: &Cont<'_>) -> bool {
        self.sub.bind_unchecked(v.clone(), value);
        let r = self.seq(rest, s, k);
        self.sub.unbind(v);
        r
    }

    fn seq(&mut self, p: &[Term], s: &[Term], k: &Cont<'_>) -> bool {
        let Some((head, rest)) = p.split_first() else {
            return s.is_empty() && self.resume(k);
        };
        if min_len(p, &self.sub) > s.len() {
            return false;
        }
        self.stats.work += 1;
        match head {
            Term::Char(c) => match s.first() {
                Some(Term::Char(d)) if c == d => self.seq(rest, &s[1..], k),
                _ => false,
            },
            Term::Var(v) => {
                if let Some(val) = self.sub.get(v) {
                    let items = val.items();
                    let m = items.len();
                    self.stats.work += m as u64;
                    if s.len() >= m && s[..m] == *items {
                        return self.seq(rest, &s[m..], k);
                    }
                    return false;
                }
                match v.kind {
                    VarKind::S => match s.first() {
                        Some(x @ Term::Char(_)) => self.with_binding(v, x.clone(), rest, &s[1..], k),
                        Some(x @ Term::Var(w)) if w.kind == VarKind::S => {
                            self.with_binding(v, x.clone(), rest, &s[1..], k)
                        }
                        _ => false,
                    },
                    VarKind::T => match s.first() {
                        Some(x @ (Term::Char(_) | Term::Paren(_))) => self.with_binding(v, x.clone(), rest, &s[1..], k),
                        Some(x @ Term::Var(w)) if w.kind != VarKind::E => {
                            self.with_binding(v, x.clone(), rest, &s[1..], k)
                        }
                        _ => false,
                    },
                    VarKind::E => {
                        if rest.is_empty() {
                            return self.with_binding(v, Term::from_items(s.to_vec()), rest, &[], k);
                        }
                        let max = s.len() - min_len(rest, &self.sub);
                        for len in 0..=max {
                            self.stats.work += 1;
                            let value = Term::from_items(s[..len].to_vec());
                            if self.with_binding(v, value, rest, &s[len..], k) {
                                return true;
                            }
                        }
                        false
                    }
                }
            }
            Term::Paren(pi) => match s.first() {
                Some(Term::Paren(si)) => {
                    let next = Cont::Seq(rest, &s[1..], k);
                    self.seq(pi.items(), si.items(), &next)
                }
                _ => false,
            },
            Term::Call(name, pargs) => match s.first() {
                Some(Term::Call(m, sargs)) if m == name && sargs.len() == pargs.len() => {
                    let next = Cont::Seq(rest, &s[1..], k);
                    self.resume(&Cont::Args(pargs, sargs, &next))
                }
                _ => false,
            },
            Term::Empty | Term::Concat(_) => unreachable!("non-canonical item in sequence"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn all(eqs: &[(Term, Term)]) -> Vec<Substitution> {
        let mut out = Vec::new();
        for_each_match(eqs, &mut MatchStats::default(), &mut |s| {
            out.push(s.clone());
            MatchControl::Continue
        });
        out
    }

    #[test]
    fn enumerates_all_splits() {
        // e.x:e.y against 'ab' has three solutions, shortest e.x first
        let p = Term::seq([Term::e("x"), Term::e("y")]);
        let sols = all(&[(p, Term::word("ab"))]);
        assert_eq!(sols.len(), 3);
        assert_eq!(sols[0].get(&Var::e("x")), Some(&Term::Empty));
    }

    #[test]
    fn rigid_subject_variables() {
        let p = Term::call("F", vec![Term::e("a"), Term::s("c")]);
        let s = Term::call("F", vec![Term::seq([Term::ch('h'), Term::e("q")]), Term::s("z")]);
        let sols = all(&[(p, s)]);
        assert_eq!(sols.len(), 1);
        assert_eq!(sols[0].get(&Var::s("c")), Some(&Term::s("z")));
        let p = Term::s("c");
        assert!(all(&[(p, Term::e("q"))]).is_empty());
    }

    #[test]
    fn repeated_variables_compare_values() {
        let p = Term::seq([Term::paren(Term::e("x")), Term::paren(Term::e("x"))]);
        let s = Term::seq([Term::paren(Term::word("ab")), Term::paren(Term::word("ab"))]);
        assert_eq!(all(&[(p.clone(), s)]).len(), 1);
        let s = Term::seq([Term::paren(Term::word("ab")), Term::paren(Term::word("ba"))]);
        assert!(all(&[(p, s)]).is_empty());
    }
}

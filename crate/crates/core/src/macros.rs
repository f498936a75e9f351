//! Update macros: named, parameterized TDL bodies that expand to core
//! updates against the tick-open snapshot, with `me` bound to the emitting
//! entity.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::model::{Configuration, Path, Severity};
use crate::name::Name;
use crate::semantics::Next;
use crate::tdl::ast::Program;
use crate::tdl::{self, interp, CheckOptions};
use crate::update::{ExpandError, Expanded, Update};
use crate::value::Value;

#[derive(Debug, Clone, PartialEq)]
pub struct MacroDef {
    pub name: Name,
    /// Parameter names without the leading `$`.
    pub params: Vec<String>,
    pub body: Arc<str>,
    program: Arc<Program>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MacroError {
    #[error("`{0}` is reserved and cannot name a macro")]
    Reserved(Name),
    #[error("macro `{name}`: {detail}")]
    Invalid { name: Name, detail: String },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MacroRegistry {
    defs: BTreeMap<Name, MacroDef>,
}

impl MacroRegistry {
    pub fn define(&mut self, name: Name, params: Vec<String>, body: &str) -> Result<(), MacroError> {
        if crate::text::is_core_keyword(name.as_str()) || tdl::parser::is_reserved(name.as_str()) {
            return Err(MacroError::Reserved(name));
        }
        let params: Vec<String> = params.into_iter().map(|p| p.trim_start_matches('$').into()).collect();
        let invalid = |detail: String| MacroError::Invalid {
            name: name.clone(),
            detail,
        };
        let program = tdl::parse_program(body).map_err(|ds| invalid(crate::semantics::render_all(body, &ds)))?;
        let errors: Vec<_> = tdl::check(
            &program,
            CheckOptions {
                macro_params: Some(&params),
                macros: None,
            },
        )
        .into_iter()
        .filter(|d| d.severity == Severity::Error)
        .collect();
        if !errors.is_empty() {
            return Err(invalid(crate::semantics::render_all(body, &errors)));
        }
        self.defs.insert(
            name.clone(),
            MacroDef {
                name,
                params,
                body: Arc::from(body),
                program: Arc::new(program),
            },
        );
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&MacroDef> {
        self.defs.get(name)
    }

    pub fn arity(&self, name: &str) -> Option<usize> {
        self.defs.get(name).map(|d| d.params.len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &MacroDef> {
        self.defs.values()
    }

    pub fn is_empty(&self) -> bool {
        self.defs.is_empty()
    }

    pub fn expand(
        &self,
        name: &Name,
        args: &[Value],
        emitter: &Path,
        snapshot: &Configuration,
    ) -> Result<Vec<Expanded>, ExpandError> {
        let def = self
            .defs
            .get(name)
            .ok_or_else(|| ExpandError::UnknownMacro(name.clone()))?;
        if def.params.len() != args.len() {
            return Err(ExpandError::Arity {
                name: name.clone(),
                expected: def.params.len(),
                got: args.len(),
            });
        }
        let failure = |reason: String| ExpandError::Failure {
            name: name.clone(),
            reason,
        };
        let entity = emitter
            .entity
            .clone()
            .ok_or_else(|| failure(format!("emitter {emitter} is not an entity path")))?;
        let params: Vec<(String, Value)> = def.params.iter().cloned().zip(args.iter().cloned()).collect();
        let mut ctx = interp::Ctx {
            snapshot,
            world: emitter.world.clone(),
            entity,
            tick: snapshot.tick,
            rng: None,
            params: &params,
        };
        let out = interp::run_segment(&def.program, &mut ctx, None).map_err(|f| failure(f.message))?;
        debug_assert!(matches!(out.next, Next::Finished { .. }));
        out.updates
            .into_iter()
            .map(|u| match u {
                Update::Core(core) => Ok(Expanded { guard: None, core }),
                Update::Guarded { guard, inner } => Ok(Expanded {
                    guard: Some(guard),
                    core: inner,
                }),
                Update::Macro { name: inner, .. } => Err(failure(format!("nested macro `{inner}`"))),
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Entity, World};
    use crate::name::name;
    use crate::update::expand_update;
    use alloc::string::ToString;
    use alloc::vec;

    fn snapshot() -> Configuration {
        let mut w = World::default();
        let mut corn = Entity::default();
        corn.data.insert(name("loc"), Value::Coord(1, 1));
        w.entities.insert(name("corn1"), corn);
        w.entities.insert(name("ch1"), Entity::default());
        let mut c = Configuration::new();
        c.worlds.insert(name("w"), w);
        c
    }

    #[test]
    fn expands_with_me_as_emitter() {
        let mut reg = MacroRegistry::default();
        reg.define(
            name("eatCorn"),
            vec!["$en".into()],
            "return { delete_data $en.loc, set_data $en.eatenBy = me, start_process $en.beenEaten = beenEaten }",
        )
        .unwrap();
        let update = Update::Macro {
            name: name("eatCorn"),
            args: vec![Value::EntityRef(name("corn1"))],
        };
        let emitter = Path::parse("w.ch1.eat").unwrap();
        let out = expand_update(&update, &emitter, &snapshot(), &reg).unwrap();
        let text: Vec<_> = out.iter().map(|e| e.to_string()).collect();
        assert_eq!(
            text,
            vec![
                "delete_data w.corn1.loc",
                "set_data w.corn1.eatenBy=@ch1",
                "start_process w.corn1.beenEaten=beenEaten",
            ]
        );
    }

    #[test]
    fn rejects_bad_definitions_and_calls() {
        let mut reg = MacroRegistry::default();
        assert!(matches!(
            reg.define(name("delete_data"), vec![], "return"),
            Err(MacroError::Reserved(_))
        ));
        assert!(reg.define(name("m"), vec![], "wait 1").is_err());
        reg.define(name("m"), vec!["a".into()], "return { delete_data $a.x }")
            .unwrap();
        let emitter = Path::parse("w.ch1.p").unwrap();
        assert!(matches!(
            reg.expand(&name("m"), &[], &emitter, &snapshot()),
            Err(ExpandError::Arity { .. })
        ));
        assert!(matches!(
            reg.expand(&name("zz"), &[], &emitter, &snapshot()),
            Err(ExpandError::UnknownMacro(_))
        ));
        assert!(matches!(
            reg.expand(&name("m"), &[Value::Int(3)], &emitter, &snapshot()),
            Err(ExpandError::Failure { .. })
        ));
    }
}

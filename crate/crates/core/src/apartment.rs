//! Two roommates and a moderator in a studio apartment.
//!
//! The base world has a thermostat and an expense ledger. The cake variant
//! adds a kitchen whose steps must happen in order: gather every
//! ingredient, then mix, then bake.

use serde_json::Value;

use crate::agent::{Agent, AgentError, AgentId, AgentSettings, Roster};
use crate::engine::{ActionRegistry, ActionSpec, Scalar, ScalarKind, Simulation, World, WorldObject};
use crate::engine::{DEFAULT_AGENT_TEMPERATURE, DEFAULT_MODERATOR_TEMPERATURE};

pub const MODERATOR_PERSONA: &str = "You are a moderator that helps an agent interact with their environment.";
pub const ACCOUNTANT_PERSONA: &str =
    "You are an accountant living in a studio apartment in the city, you have a roommate. \
You can talk to your roommate, and interact with the environment, including speaking with your roommate.";
pub const ENGINEER_PERSONA: &str =
    "You are an engineer living in a studio apartment in the city, you have a roommate. \
You can talk to your roommate, and interact with the environment, including speaking with your roommate.";
pub const CAKE_GOAL: &str = " Your goal is to work together with your roommate to bake a cake in the kitchen, \
performing only one step at a time.";

pub const INITIAL_TEMPERATURE: f64 = 72.0;
pub const MIN_TEMPERATURE: f64 = 40.0;
pub const MAX_TEMPERATURE: f64 = 95.0;
pub const INGREDIENTS: [&str; 5] = ["flour", "sugar", "eggs", "butter", "milk"];
const BAKE_TEMPERATURE: f64 = 350.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ApartmentConfig {
    pub roommates: Vec<AgentSettings>,
    pub moderator: AgentSettings,
}

impl Default for ApartmentConfig {
    fn default() -> Self {
        Self {
            roommates: vec![
                AgentSettings::new("Roommate 1", ACCOUNTANT_PERSONA, DEFAULT_AGENT_TEMPERATURE),
                AgentSettings::new("Roommate 2", ENGINEER_PERSONA, DEFAULT_AGENT_TEMPERATURE),
            ],
            moderator: AgentSettings::new("Moderator", MODERATOR_PERSONA, DEFAULT_MODERATOR_TEMPERATURE),
        }
    }
}

fn moderator(settings: &AgentSettings) -> Result<Agent, AgentError> {
    // kept outside the roster id space
    Agent::new(
        AgentId(u32::MAX),
        settings.name.clone(),
        settings.persona.clone(),
        settings.params.clone(),
        settings.history_cap,
    )
}

pub fn build_apartment(config: &ApartmentConfig) -> Result<Simulation, AgentError> {
    let roster = Roster::from_settings(&config.roommates)?;
    let mut world = World::new();
    world.add(WorldObject::new("thermostat").with("temperature", INITIAL_TEMPERATURE));
    world.add(WorldObject::new("expenses").with("entries", "[]").with("total", 0.0));
    Ok(Simulation::new(
        roster,
        moderator(&config.moderator)?,
        world,
        apartment_registry(),
    ))
}

pub fn build_cake_variant(config: &ApartmentConfig) -> Result<Simulation, AgentError> {
    let mut config = config.clone();
    for roommate in &mut config.roommates {
        roommate.persona.push_str(CAKE_GOAL);
    }
    let mut sim = build_apartment(&config)?;
    for ingredient in INGREDIENTS {
        sim.world.add(
            WorldObject::new(ingredient)
                .with("kind", "ingredient")
                .with("gathered", false),
        );
    }
    sim.world.add(WorldObject::new("bowl").with("mixed", false));
    sim.world
        .add(WorldObject::new("oven").with("on", false).with("temperature", 0.0));
    sim.world.add(WorldObject::new("cake").with("baked", false));
    for spec in kitchen_actions() {
        sim.registry.register(spec).expect("kitchen action names are unique");
    }
    Ok(sim)
}

pub fn thermostat(world: &World) -> Option<f64> {
    world.get("thermostat", "temperature").and_then(Scalar::as_f64)
}

/// Expense entries as (description, amount in cents), in insertion order.
pub fn ledger(world: &World) -> Vec<(String, i64)> {
    world
        .get("expenses", "entries")
        .and_then(Scalar::as_str)
        .and_then(|text| serde_json::from_str(text).ok())
        .unwrap_or_default()
}

pub fn ledger_total(world: &World) -> Option<f64> {
    world.get("expenses", "total").and_then(Scalar::as_f64)
}

fn format_cents(cents: i64) -> String {
    format!("{}.{:02}", cents / 100, cents % 100)
}

fn amount_to_cents(amount: f64) -> Result<i64, String> {
    if !amount.is_finite() || amount < 0.0 {
        return Err(format!("amount must be a non-negative number of dollars, got {amount}"));
    }
    if amount > 1e12 {
        return Err("amount is unreasonably large".into());
    }
    Ok((amount * 100.0).round() as i64)
}

fn write_ledger(world: &mut World, entries: &[(String, i64)]) -> Result<(), String> {
    let total: i64 = entries.iter().map(|(_, c)| c).sum();
    let text = serde_json::to_string(entries).map_err(|e| e.to_string())?;
    world.set("expenses", "entries", text)?;
    world.set("expenses", "total", total as f64 / 100.0)
}

pub fn apartment_registry() -> ActionRegistry {
    let mut registry = ActionRegistry::new();
    let specs = vec![
        ActionSpec::new(
            "set_thermostat",
            "Set the thermostat to a new temperature in degrees Fahrenheit.",
            |world, args| {
                let value = args[0].as_f64().unwrap_or_default();
                world.set("thermostat", "temperature", value)?;
                Ok(format!("set_thermostat: the thermostat is now set to {} degrees Fahrenheit.", Scalar::Number(value)))
            },
        )
        .param("value", ScalarKind::Number)
        .tag("thermostat")
        .guard(|_, args| match args[0].as_f64() {
            Some(v) if (MIN_TEMPERATURE..=MAX_TEMPERATURE).contains(&v) => Ok(()),
            _ => Err(format!(
                "the thermostat only accepts temperatures from {MIN_TEMPERATURE} to {MAX_TEMPERATURE} degrees Fahrenheit"
            )),
        }),
        ActionSpec::new(
            "read_thermostat",
            "Read the current thermostat temperature setting in degrees Fahrenheit.",
            |world, _| {
                let t = thermostat(world).ok_or("the thermostat is missing")?;
                Ok(format!("The thermostat is set to {} degrees Fahrenheit.", Scalar::Number(t)))
            },
        )
        .tag("thermostat"),
        ActionSpec::speak("speak_to_roommate", "Say something to your roommate and hear their reply right away."),
        ActionSpec::new(
            "add_expense",
            "Record a shared bill or purchase and its amount in dollars in the expense ledger.",
            |world, args| {
                let description = args[0].as_str().unwrap_or_default().trim().to_string();
                let cents = amount_to_cents(args[1].as_f64().unwrap_or(-1.0))?;
                let mut entries = ledger(world);
                entries.push((description.clone(), cents));
                write_ledger(world, &entries)?;
                let total: i64 = entries.iter().map(|(_, c)| c).sum();
                Ok(format!(
                    "Recorded {description} for ${}. The ledger total is ${}.",
                    format_cents(cents),
                    format_cents(total)
                ))
            },
        )
        .param("description", ScalarKind::Text)
        .param("amount", ScalarKind::Number)
        .tag("expenses")
        .guard(|_, args| {
            if args[0].as_str().is_none_or(|d| d.trim().is_empty()) {
                return Err("an expense needs a description".into());
            }
            amount_to_cents(args[1].as_f64().unwrap_or(-1.0)).map(|_| ())
        }),
        ActionSpec::new("list_expenses", "List every recorded bill and purchase with the total owed.", |world, _| {
            let entries = ledger(world);
            if entries.is_empty() {
                return Ok("No expenses have been recorded.".into());
            }
            let total: i64 = entries.iter().map(|(_, c)| c).sum();
            let lines: Vec<String> = entries
                .iter()
                .enumerate()
                .map(|(i, (d, c))| format!("{}. {d}: ${}", i + 1, format_cents(*c)))
                .collect();
            Ok(format!("{}\nTotal: ${}", lines.join("\n"), format_cents(total)))
        })
        .tag("expenses"),
        ActionSpec::new(
            "make_spreadsheet",
            "Create a spreadsheet that tracks shared expenses and payments.",
            |world, _| {
                let mut csv = String::from("description,amount\n");
                for (d, c) in ledger(world) {
                    csv.push_str(&format!("{},{}\n", Value::String(d), format_cents(c)));
                }
                world.add(WorldObject::new("spreadsheet").with("csv", csv.clone()));
                Ok(format!("Created a spreadsheet with {} row(s).", csv.lines().count() - 1))
            },
        )
        .tag("expenses"),
    ];
    for spec in specs {
        registry.register(spec).expect("apartment action names are unique");
    }
    registry
}

fn is_gathered(world: &World, ingredient: &str) -> bool {
    world
        .get(ingredient, "gathered")
        .and_then(Scalar::as_bool)
        .unwrap_or(false)
}

fn flag(world: &World, object: &str, attribute: &str) -> bool {
    world.get(object, attribute).and_then(Scalar::as_bool).unwrap_or(false)
}

fn kitchen_actions() -> Vec<ActionSpec> {
    vec![
        ActionSpec::new(
            "gather",
            "Gather one cake ingredient from the kitchen pantry.",
            |world, args| {
                let ingredient = args[0].as_str().unwrap_or_default();
                if is_gathered(world, ingredient) {
                    return Ok(format!("The {ingredient} was already gathered."));
                }
                world.set(ingredient, "gathered", true)?;
                Ok(format!("Gathered the {ingredient}."))
            },
        )
        .param("ingredient", ScalarKind::Text)
        .tag("kitchen")
        .guard(|world, args| {
            let name = args[0].as_str().unwrap_or_default();
            let is_ingredient = world.get(name, "kind").and_then(Scalar::as_str) == Some("ingredient");
            if is_ingredient {
                Ok(())
            } else {
                Err(format!(
                    "there is no ingredient named {name}; the pantry has {}",
                    INGREDIENTS.join(", ")
                ))
            }
        }),
        ActionSpec::new(
            "mix",
            "Mix the gathered cake ingredients into batter in the bowl.",
            |world, _| {
                world.set("bowl", "mixed", true)?;
                Ok("Mixed the ingredients into a batter.".into())
            },
        )
        .tag("kitchen")
        .guard(|world, _| {
            if flag(world, "bowl", "mixed") {
                return Err("the batter is already mixed".into());
            }
            let missing: Vec<&str> = INGREDIENTS.iter().copied().filter(|i| !is_gathered(world, i)).collect();
            if missing.is_empty() {
                Ok(())
            } else {
                Err(format!("gather {} before mixing", missing.join(", ")))
            }
        }),
        ActionSpec::new(
            "bake",
            "Bake the mixed batter in the oven to make the cake.",
            |world, _| {
                world.set("oven", "on", true)?;
                world.set("oven", "temperature", BAKE_TEMPERATURE)?;
                world.set("cake", "baked", true)?;
                Ok("The cake is baked.".into())
            },
        )
        .tag("kitchen")
        .guard(|world, _| {
            if flag(world, "cake", "baked") {
                Err("the cake is already baked".into())
            } else if !flag(world, "bowl", "mixed") {
                Err("mix the batter before baking".into())
            } else {
                Ok(())
            }
        }),
    ]
}

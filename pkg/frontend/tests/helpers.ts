import { readFileSync } from "node:fs";

// Fixtures are recorded service responses; tests assert against them verbatim.
export function fixture(name: string): string {
  return readFileSync(new URL(`../fixtures/${name}`, import.meta.url), "utf8");
}

export function fixtureJson<T>(name: string): T {
  return JSON.parse(fixture(name)) as T;
}

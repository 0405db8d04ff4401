import { describe, expect, it } from "vitest";
import { ApiClient } from "../src/api.js";
import { dataUrlToBase64, SearchModel } from "../src/searchView.js";
import { Session } from "../src/session.js";
import { SearchResult } from "../src/types.js";
import { makeFetchStub } from "./helpers.js";

function setup(fetchImage = async (_url: string) => "aW1n") {
  const stub = makeFetchStub();
  const api = new ApiClient("http://api", new Session(), stub.fetchFn);
  return { ...stub, model: new SearchModel(api, fetchImage) };
}

function result(id: string, mediaUrl?: string): SearchResult {
  return {
    id,
    distance: 0.01,
    metadata: mediaUrl ? { media_url: mediaUrl } : {},
  };
}

const embedder = { name: "grid-moment-v1", dimension: 2016, version: 1 };

describe("SearchModel", () => {
  it("searchImage stores results and grows the breadcrumb trail", async () => {
    const { model, respondWith } = setup();
    respondWith(200, { results: [result("eth:0xabc:1")], embedder });
    await model.searchImage("aGk=", "upload.png");
    expect(model.results.map((r) => r.id)).toEqual(["eth:0xabc:1"]);
    expect(model.history.map((b) => b.label)).toEqual(["upload.png"]);
  });

  it("click-through re-searches with the clicked result's image", async () => {
    const fetched: string[] = [];
    const { model, respondWith, calls } = setup(async (url) => {
      fetched.push(url);
      return "bmV4dA==";
    });
    respondWith(200, { results: [result("eth:0xabc:1", "http://m/1.png")], embedder });
    await model.searchImage("aGk=", "upload.png");
    respondWith(200, { results: [result("eth:0xabc:2")], embedder });
    await model.searchFromResult(model.results[0]!);
    expect(fetched).toEqual(["http://m/1.png"]);
    expect(calls[1]!.body).toMatchObject({ image_base64: "bmV4dA==" });
    expect(model.history.map((b) => b.label)).toEqual([
      "upload.png",
      "eth:0xabc:1",
    ]);
  });

  it("a result without media_url yields an inline error, not a crash", async () => {
    const { model, respondWith } = setup();
    respondWith(200, { results: [result("eth:0xabc:3")], embedder });
    await model.searchImage("aGk=", "u");
    await model.searchFromResult(model.results[0]!);
    expect(model.inlineError).toContain("eth:0xabc:3");
  });

  it("a rejected search clears results and reports the server detail", async () => {
    const { model, respondWith } = setup();
    respondWith(422, { detail: "invalid base64" });
    await model.searchImage("!!!", "bad");
    expect(model.results).toEqual([]);
    expect(model.inlineError).toBe("invalid base64");
    expect(model.history).toEqual([]);
  });
});

describe("dataUrlToBase64", () => {
  it("strips the data-URL prefix", () => {
    expect(dataUrlToBase64("data:image/png;base64,aGVsbG8=")).toBe("aGVsbG8=");
  });

  it("passes through bare base64", () => {
    expect(dataUrlToBase64("aGVsbG8=")).toBe("aGVsbG8=");
  });
});

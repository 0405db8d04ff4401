import { ApiClient } from "./api.js";
import { SearchResult } from "./types.js";

export interface Breadcrumb {
  label: string;
  imageBase64: string;
}

/**
 * Search view state: upload -> base64 -> /search, plus the exploration loop
 * where clicking a result re-searches with that NFT's image and grows the
 * breadcrumb trail.
 */
export class SearchModel {
  results: SearchResult[] = [];
  history: Breadcrumb[] = [];
  inlineError: string | null = null;

  constructor(
    private api: ApiClient,
    private fetchImageBase64: (url: string) => Promise<string>
  ) {}

  async searchImage(imageBase64: string, label: string, topK = 10): Promise<void> {
    this.inlineError = null;
    try {
      const resp = await this.api.search(imageBase64, topK);
      this.results = resp.results;
      this.history = [...this.history, { label, imageBase64 }];
    } catch (e) {
      this.results = [];
      this.inlineError = e instanceof Error ? e.message : String(e);
    }
  }

  /** Exploration click-through: search again with the clicked result's image. */
  async searchFromResult(result: SearchResult): Promise<void> {
    const mediaUrl = result.metadata["media_url"];
    if (!mediaUrl) {
      this.inlineError = `no media_url for ${result.id}`;
      return;
    }
    const b64 = await this.fetchImageBase64(mediaUrl);
    await this.searchImage(b64, result.id);
  }
}

/** Strip the data-URL prefix a FileReader produces; the API wants bare base64. */
export function dataUrlToBase64(dataUrl: string): string {
  const comma = dataUrl.indexOf(",");
  return comma >= 0 ? dataUrl.slice(comma + 1) : dataUrl;
}

/**
 * In-memory session state. The auth token is deliberately never written to
 * localStorage/sessionStorage; a page reload or an expired token means
 * logging in again.
 */
export class Session {
  private token: string | null = null;
  namespace = "main";
  pollIntervalMs = 2000;
  onExpired: () => void = () => {};

  setToken(token: string): void {
    this.token = token;
  }

  clear(): void {
    this.token = null;
  }

  get loggedIn(): boolean {
    return this.token !== null;
  }

  authHeader(): Record<string, string> {
    return this.token ? { Authorization: `Bearer ${this.token}` } : {};
  }

  /** Called by the API client on any 401: drop the token, trigger re-login. */
  expire(): void {
    this.token = null;
    this.onExpired();
  }
}

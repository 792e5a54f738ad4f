// Typed client for the annotation API served by `dbinsights serve-eval`.

export type Winner = 'A' | 'B';

export interface SessionInfo {
  total_pairs: number;
  answered: number;
  evaluator_id: string;
  next_index: number | null;
  complete: boolean;
}

export interface PairView {
  pair_index: number;
  insight_a_text: string;
  insight_b_text: string;
  answered: boolean;
}

export interface ChoiceAck {
  status: string;
  pair_index: number;
  winner: Winner;
}

export interface Leaderboard {
  ratings: Record<string, number>;
  games: number;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

async function parseOrThrow<T>(response: Response): Promise<T> {
  if (!response.ok) {
    let detail = `HTTP ${response.status}`;
    try {
      const body = await response.json();
      detail = typeof body.detail === 'string' ? body.detail : JSON.stringify(body.detail ?? body);
    } catch {
      // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, detail);
  }
  return (await response.json()) as T;
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  session(): Promise<SessionInfo> {
    return this.get<SessionInfo>('/api/session');
  }

  pair(index: number): Promise<PairView> {
    return this.get<PairView>(`/api/pair/${index}`);
  }

  async submit(index: number, winner: Winner): Promise<ChoiceAck> {
    const response = await this.fetchImpl(`${this.baseUrl}/api/pair/${index}/choice`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify({ winner }),
    });
    return parseOrThrow<ChoiceAck>(response);
  }

  leaderboard(): Promise<Leaderboard> {
    return this.get<Leaderboard>('/api/leaderboard');
  }

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`);
    return parseOrThrow<T>(response);
  }
}

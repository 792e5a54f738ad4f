// Session controller: pair loading, guarded submission, progress.
// UI-free so the whole flow is testable without a DOM.

import { ApiClient, ApiError, Leaderboard, PairView, Winner } from './api.js';

export type Phase =
  | 'loading' // fetching session state or the next pair
  | 'judging' // a pair is on screen, waiting for a choice
  | 'submitting' // choice in flight; further clicks are ignored
  | 'error' // last request failed; retry keeps the pending choice
  | 'complete'; // all pairs answered, leaderboard available

export interface SessionState {
  phase: Phase;
  total: number;
  answered: number;
  pair: PairView | null;
  pendingChoice: Winner | null;
  errorMessage: string | null;
  leaderboard: Leaderboard | null;
}

type Listener = (state: SessionState) => void;

export class AnnotationFlow {
  private state: SessionState = {
    phase: 'loading',
    total: 0,
    answered: 0,
    pair: null,
    pendingChoice: null,
    errorMessage: null,
    leaderboard: null,
  };
  private listeners: Listener[] = [];

  constructor(private readonly api: ApiClient) {}

  getState(): SessionState {
    return this.state;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
  }

  private update(patch: Partial<SessionState>): void {
    this.state = { ...this.state, ...patch };
    for (const listener of this.listeners) {
      listener(this.state);
    }
  }

  async start(): Promise<void> {
    this.update({ phase: 'loading', errorMessage: null });
    try {
      await this.loadNext();
    } catch (error) {
      this.fail(error);
    }
  }

  /** Submit a choice for the current pair. No-op unless a pair is awaiting one. */
  async choose(winner: Winner): Promise<void> {
    if (this.state.phase !== 'judging' || this.state.pair === null) {
      return;
    }
    this.update({ phase: 'submitting', pendingChoice: winner, errorMessage: null });
    await this.sendPending();
  }

  /** Re-attempt after a failure: re-send the retained choice, or reload. */
  async retry(): Promise<void> {
    if (this.state.phase !== 'error') {
      return;
    }
    if (this.state.pendingChoice !== null && this.state.pair !== null) {
      this.update({ phase: 'submitting', errorMessage: null });
      await this.sendPending();
    } else {
      await this.start();
    }
  }

  private async sendPending(): Promise<void> {
    const pair = this.state.pair;
    const winner = this.state.pendingChoice;
    if (pair === null || winner === null) {
      return;
    }
    try {
      await this.api.submit(pair.pair_index, winner);
      this.update({ pendingChoice: null, phase: 'loading' });
      await this.loadNext();
    } catch (error) {
      if (error instanceof ApiError && error.status === 404) {
        // Stale pair index: surface the error and pull fresh state.
        this.update({ pendingChoice: null });
        this.fail(error);
        await this.start();
        return;
      }
      this.fail(error);
    }
  }

  private async loadNext(): Promise<void> {
    const info = await this.api.session();
    if (info.next_index === null) {
      const leaderboard = await this.api.leaderboard();
      this.update({
        phase: 'complete',
        total: info.total_pairs,
        answered: info.answered,
        pair: null,
        leaderboard,
      });
      return;
    }
    const pair = await this.api.pair(info.next_index);
    this.update({
      phase: 'judging',
      total: info.total_pairs,
      answered: info.answered,
      pair,
      leaderboard: null,
    });
  }

  private fail(error: unknown): void {
    const message =
      error instanceof ApiError
        ? error.message
        : 'Network problem; your work is saved. Retry when you are back online.';
    this.update({ phase: 'error', errorMessage: message });
  }
}

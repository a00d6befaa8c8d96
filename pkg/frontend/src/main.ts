/**
 * Browser bootstrap.  Everything interesting lives in state.ts/render.ts;
 * this file only wires DOM events to state methods and repaints.
 */

import { ReviewApiClient, type ReviewItem } from "./api";
import { ConsoleState } from "./state";
import { renderBanner, renderClusterPanel, renderItemDetail, renderQueue, renderRunPanel } from "./render";

export interface ConsoleConfig {
  baseUrl: string;
  token: string;
  company?: string;
}

export class ReviewConsole {
  private readonly state: ConsoleState;

  constructor(
    private readonly root: HTMLElement,
    config: ConsoleConfig,
  ) {
    this.state = new ConsoleState(new ReviewApiClient(config.baseUrl, config.token));
    this.state.filter.company = config.company;
    this.root.addEventListener("click", (event) => this.onClick(event));
  }

  async start(): Promise<void> {
    await this.state.refreshQueue();
    this.paint();
  }

  private paint(): void {
    const decidingId = this.state.items.find((i) => this.state.isDeciding(i.item_id))?.item_id ?? null;
    this.root.innerHTML = [
      renderBanner(this.state.banner),
      `<section class="queue-pane">${renderQueue(this.state.items, decidingId)}</section>`,
      this.state.selected
        ? `<section class="detail-pane">${renderItemDetail(this.state.selected)}${renderClusterPanel(this.state.cluster)}</section>`
        : "",
      `<section class="run-pane">${renderRunPanel(this.state.run, this.state.runError)}</section>`,
    ].join("\n");
  }

  private itemFor(target: HTMLElement): ReviewItem | undefined {
    const id = target.getAttribute("data-item-id");
    return this.state.items.find((i) => i.item_id === id);
  }

  private async onClick(event: Event): Promise<void> {
    const target = event.target as HTMLElement;
    const action = target.getAttribute("data-action");
    if (!action) {
      const row = target.closest<HTMLElement>(".queue-row");
      const item = row ? this.itemFor(row) : undefined;
      if (item) {
        await this.state.select(item);
        this.paint();
      }
      return;
    }
    if (action === "retry") {
      await this.state.refreshQueue();
      this.paint();
      return;
    }
    const item = this.itemFor(target);
    if (!item) {
      return;
    }
    if (action === "approve" || action === "reject") {
      this.paint(); // repaint first so the buttons render disabled while in flight
      await this.state.decide(item, { decision: action });
    } else if (action === "edit") {
      this.state.selected = item;
      const draft = this.state.beginEdit();
      if (!draft) {
        return;
      }
      const question = window.prompt("Question", draft.question) ?? draft.question;
      const answer = window.prompt("Answer", draft.answer) ?? draft.answer;
      await this.state.decide(item, { decision: "edit", new_question: question, new_answer: answer });
    }
    this.paint();
  }
}

/** Mount the console when loaded in a page with a #console element. */
export function bootstrap(config: ConsoleConfig): ReviewConsole | null {
  const root = document.getElementById("console");
  if (!root) {
    return null;
  }
  const console_ = new ReviewConsole(root, config);
  void console_.start();
  return console_;
}

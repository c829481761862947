import type { ApiClient, JobStatus } from "./api";

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onProgress?: (status: JobStatus) => void;
}

/** Poll a job until it finishes; resolves with the final status. */
export async function pollJob(
  client: ApiClient,
  jobId: string,
  opts: PollOptions = {},
): Promise<JobStatus> {
  const interval = opts.intervalMs ?? 500;
  const deadline = Date.now() + (opts.timeoutMs ?? 600_000);
  for (;;) {
    const status = await client.getJob(jobId);
    opts.onProgress?.(status);
    if (status.state === "done" || status.state === "failed") return status;
    if (Date.now() > deadline) throw new Error(`job ${jobId} timed out`);
    await new Promise((r) => setTimeout(r, interval));
  }
}

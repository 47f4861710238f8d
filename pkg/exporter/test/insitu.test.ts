import { mkdtempSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';

import { describe, expect, it } from 'vitest';

import { InSituFileError, readInSituCsv } from '../src/insitu.js';

const HEADER = 'record_id,station_id,lat,lon,date,turbidity_ntu';

function writeTemp(content: string): string {
  const dir = mkdtempSync(join(tmpdir(), 'insitu-'));
  const path = join(dir, 'insitu.csv');
  writeFileSync(path, content, 'utf8');
  return path;
}

describe('readInSituCsv', () => {
  it('parses valid rows in order', () => {
    const path = writeTemp(`${HEADER}\nr1,ST1,22.3,114.2,2020-03-10,4.25\nr2,ST2,-10.5,0,2020-04-01,0\n`);
    const records = readInSituCsv(path);
    expect(records.map((r) => r.recordId)).toEqual(['r1', 'r2']);
    expect(records[0]).toEqual({
      recordId: 'r1', stationId: 'ST1', lat: 22.3, lon: 114.2, date: '2020-03-10', turbidityNtu: 4.25,
    });
  });

  it('tolerates CRLF line endings', () => {
    const path = writeTemp(`${HEADER}\r\nr1,ST1,22.3,114.2,2020-03-10,4.2\r\n`);
    expect(readInSituCsv(path)).toHaveLength(1);
  });

  it('rejects a wrong header', () => {
    const path = writeTemp('id,station,lat,lon,date,ntu\nr1,ST1,1,2,2020-01-01,1\n');
    expect(() => readInSituCsv(path)).toThrow('bad header');
  });

  it('rejects an empty file', () => {
    expect(() => readInSituCsv(writeTemp(''))).toThrow('empty file');
  });

  it('cites the line number for an out-of-range latitude', () => {
    const path = writeTemp(`${HEADER}\nr1,ST1,22.3,114.2,2020-03-10,4.2\nr2,ST1,95.0,114.2,2020-03-11,1.0\n`);
    try {
      readInSituCsv(path);
      expect.unreachable('should have thrown');
    } catch (err) {
      expect(err).toBeInstanceOf(InSituFileError);
      expect((err as InSituFileError).diagnostics).toEqual(['line 3: lat out of range [-90, 90]: 95.0']);
    }
  });

  it('collects every problem, not just the first', () => {
    const path = writeTemp([
      HEADER,
      'r1,ST1,22.3,200.0,2020-03-10,4.2',
      'r2,ST1,22.3,114.2,2020-13-01,1.0',
      'r3,ST1,22.3,114.2,2020-03-10,-2',
      '',
    ].join('\n'));
    try {
      readInSituCsv(path);
      expect.unreachable('should have thrown');
    } catch (err) {
      const diags = (err as InSituFileError).diagnostics;
      expect(diags).toHaveLength(3);
      expect(diags[0]).toContain('line 2: lon');
      expect(diags[1]).toContain('line 3: invalid date');
      expect(diags[2]).toContain('line 4: turbidity_ntu');
    }
  });

  it('rejects duplicate record ids', () => {
    const path = writeTemp(`${HEADER}\nr1,ST1,22.3,114.2,2020-03-10,4.2\nr1,ST1,22.3,114.2,2020-03-11,5.0\n`);
    expect(() => readInSituCsv(path)).toThrow('duplicate record_id "r1"');
  });

  it('rejects rows with missing columns', () => {
    const path = writeTemp(`${HEADER}\nr1,ST1,22.3,114.2,2020-03-10\n`);
    expect(() => readInSituCsv(path)).toThrow('expected 6 columns, got 5');
  });
});

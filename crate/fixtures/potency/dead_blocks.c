int main(void) {
  int v = 10;
  if (0) {
    v = v + 100;
    v = v * 2;
  }
  if (1) {
    v = v + 1;
  } else {
    v = v - 1;
  }
  goto first;
first:
  v = v + 2;
  goto second;
second:
  v = v + 3;
  goto done;
done:
  return v % 7;
}
